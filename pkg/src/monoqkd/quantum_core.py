"""Singlet-state measurement statistics on the protocol's angle grid.

Angles are carried as integer grid indices ``k`` meaning ``k * pi / 8``.
Every total angle reachable in the protocol (``phi + c``) lies on the grid
``k = 0..8``.  Conversion to radians happens only where a trigonometric value
is needed, and for on-grid differences the cosine comes from an exact table.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

GRID_SIZE = 9
GRID = tuple(range(GRID_SIZE))
PHI_INDICES = (0, 1, 2, 3, 4)
C_INDICES = (0, 4)
HALF_PI = 4  # pi/2 in grid units
GRID_TOL = 1e-12

_SQRT1_2 = math.sqrt(2.0) / 2.0
# cos 2x for x = d * pi / 8, indexed by d mod 8.
_COS_DOUBLE = (1.0, _SQRT1_2, 0.0, -_SQRT1_2, -1.0, -_SQRT1_2, 0.0, _SQRT1_2)


def angle(k: int) -> float:
    """Radians for grid index ``k``."""
    return k * math.pi / 8.0


def grid_index(value: float, tol: float = GRID_TOL) -> int:
    """Grid index of an angle in radians.

    Raises ``ValueError`` if ``value`` is not ``k * pi / 8`` for an integer
    ``0 <= k <= 8`` within ``tol``.
    """
    k = value * 8.0 / math.pi
    rk = round(k)
    if abs(k - rk) > tol or not 0 <= rk <= 8:
        raise ValueError(f"angle {value!r} is not on the pi/8 grid 0..pi")
    return int(rk)


def on_grid(value: float, tol: float = GRID_TOL) -> bool:
    try:
        grid_index(value, tol)
    except ValueError:
        return False
    return True


def _cos_double_diff(a: float, b: float) -> float:
    """cos 2(a - b), exact when a - b is a multiple of pi/8."""
    k = (a - b) * 8.0 / math.pi
    rk = round(k)
    if abs(k - rk) <= GRID_TOL:
        return _COS_DOUBLE[rk % 8]
    return math.cos(2.0 * (a - b))


@dataclass(frozen=True)
class MeasurementBasis:
    """A measurement choice ``(phi, c)`` in grid units; the angle is ``phi + c``."""

    phi: int
    c: int

    def __post_init__(self):
        if self.phi not in PHI_INDICES:
            raise ValueError(f"phi index must be one of {PHI_INDICES}, got {self.phi!r}")
        if self.c not in C_INDICES:
            raise ValueError(f"c index must be one of {C_INDICES}, got {self.c!r}")

    @property
    def total(self) -> int:
        return self.phi + self.c

    def radians(self) -> float:
        return angle(self.total)

    @classmethod
    def from_radians(cls, phi: float, c: float) -> "MeasurementBasis":
        return cls(grid_index(phi), grid_index(c))

    @classmethod
    def from_code(cls, code: int) -> "MeasurementBasis":
        """Basis for a code in 0..9 (``phi = code // 2``, ``c`` from the low bit)."""
        return cls(code // 2, HALF_PI * (code % 2))


ALL_BASES = tuple(MeasurementBasis(p, c) for p in PHI_INDICES for c in C_INDICES)


class Outcome(enum.IntEnum):
    PLUS = 1
    MINUS = -1

    def __neg__(self) -> "Outcome":
        return Outcome(-int(self))


def to_bit(o: int) -> int:
    """Map an outcome to a bit: +1 -> 0, -1 -> 1."""
    if o == 1:
        return 0
    if o == -1:
        return 1
    raise ValueError(f"outcome must be +1 or -1, got {o!r}")


def to_bits(outcomes: np.ndarray) -> np.ndarray:
    """Vectorised ``to_bit`` for an array of +/-1 outcomes."""
    return (np.asarray(outcomes) < 0).astype(np.uint8)


def correlation(a: float, b: float) -> float:
    """Singlet expectation E(a, b) = -cos 2(a - b), angles in radians."""
    return -_cos_double_diff(a, b)


def correlation_k(ka, kb):
    """E(a, b) for grid indices; accepts ints or integer arrays."""
    d = (np.asarray(ka) - np.asarray(kb)) % 8
    out = -np.asarray(_COS_DOUBLE)[d]
    return float(out) if out.ndim == 0 else out


CORRELATION_TABLE = correlation_k(np.arange(GRID_SIZE)[:, None], np.arange(GRID_SIZE)[None, :])


@dataclass(frozen=True)
class JointDistribution:
    """p(o_A, o_B) for the four outcome pairs."""

    pp: float
    pm: float
    mp: float
    mm: float

    def __post_init__(self):
        probs = (self.pp, self.pm, self.mp, self.mm)
        if any(p < 0 for p in probs):
            raise ValueError(f"negative probability in {probs}")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {sum(probs)!r}")

    def p(self, oa: int, ob: int) -> float:
        return {(1, 1): self.pp, (1, -1): self.pm, (-1, 1): self.mp, (-1, -1): self.mm}[
            (int(oa), int(ob))
        ]

    def cells(self) -> Tuple[Tuple[int, int, float], ...]:
        return ((1, 1, self.pp), (1, -1, self.pm), (-1, 1, self.mp), (-1, -1, self.mm))

    def marginal_a(self, oa: int) -> float:
        return self.p(oa, 1) + self.p(oa, -1)

    def marginal_b(self, ob: int) -> float:
        return self.p(1, ob) + self.p(-1, ob)

    def correlation(self) -> float:
        return sum(oa * ob * p for oa, ob, p in self.cells())


def singlet_distribution(a: float, b: float) -> JointDistribution:
    """Born-rule outcome distribution of the singlet: (1 - oA*oB*cos 2(a-b)) / 4."""
    cos2 = _cos_double_diff(a, b)
    return JointDistribution(
        pp=(1.0 - cos2) / 4.0,
        pm=(1.0 + cos2) / 4.0,
        mp=(1.0 + cos2) / 4.0,
        mm=(1.0 - cos2) / 4.0,
    )


def sample_joint(dist: JointDistribution, rng: np.random.Generator, size=None):
    """Draw outcome pairs from ``dist``.

    With ``size=None`` returns one ``(Outcome, Outcome)``; otherwise two int8
    arrays of the given size.
    """
    cells = dist.cells()
    probs = np.array([c[2] for c in cells])
    idx = rng.choice(4, size=size, p=probs / probs.sum())
    oa = np.array([c[0] for c in cells], dtype=np.int8)[idx]
    ob = np.array([c[1] for c in cells], dtype=np.int8)[idx]
    if size is None:
        return Outcome(int(oa)), Outcome(int(ob))
    return oa, ob


def sample_singlet(ka: np.ndarray, kb: np.ndarray, rng: np.random.Generator):
    """Sample singlet outcomes for arrays of grid angles.

    Alice's outcome is a fair coin; the product o_A*o_B is +1 with
    probability (1 + E)/2.  At E = +/-1 the product is deterministic.
    """
    ka = np.asarray(ka)
    kb = np.asarray(kb)
    u = rng.random((2, ka.size))
    oa = np.where(u[0] < 0.5, 1, -1).astype(np.int8)
    p_same = (1.0 + CORRELATION_TABLE[ka, kb]) / 2.0
    prod = np.where(u[1] < p_same, 1, -1).astype(np.int8)
    return oa, (oa * prod).astype(np.int8)
