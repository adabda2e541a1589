"""Deterministic hidden-variable strategies for the eavesdropper.

A strategy (one value of the hidden variable) fixes both outcome functions
``wa(a, b)`` and ``wb(a, b)`` over the full 9x9 angle grid.  Tables are indexed
``[a, b]`` by grid index.  Strategies must reproduce the perfect
(anti-)correlations the parties test for; those constraints are checked
exhaustively on the grid by :func:`check_constraints`.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .quantum_core import CORRELATION_TABLE, GRID_SIZE, HALF_PI

SQRT2 = math.sqrt(2.0)


class LocalityClass(enum.Enum):
    LOCAL = "Local"
    NONLOCAL = "NonLocal"


class Side(enum.Enum):
    A = "A"
    B = "B"


def _sign_table(values) -> np.ndarray:
    t = np.array(values, dtype=np.int8)
    if t.shape != (GRID_SIZE, GRID_SIZE):
        raise ValueError(f"sign table must be {GRID_SIZE}x{GRID_SIZE}, got {t.shape}")
    if not np.all(np.abs(t) == 1):
        raise ValueError("sign table entries must be +1 or -1")
    t.setflags(write=False)
    return t


@dataclass(frozen=True, eq=False)
class HVStrategy:
    """Outcome tables for one hidden-variable value."""

    lambda_id: str
    wa: np.ndarray
    wb: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "wa", _sign_table(self.wa))
        object.__setattr__(self, "wb", _sign_table(self.wb))

    def key(self) -> bytes:
        return self.wa.tobytes() + self.wb.tobytes()

    def __eq__(self, other):
        if not isinstance(other, HVStrategy):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())


@dataclass(frozen=True)
class Violation:
    identity: str
    a: int
    b: int
    detail: str = ""

    def __str__(self):
        return f"{self.identity} violated at (a={self.a}*pi/8, b={self.b}*pi/8){': ' + self.detail if self.detail else ''}"


def check_constraints(s: HVStrategy) -> list[Violation]:
    """All grid points where ``s`` breaks a perfect-correlation identity.

    Identities, for every grid pair where both sides are defined:

    * ``same_basis_anticorrelation``: wa*wb = -1 when the angles coincide or
      differ by pi (same measurement basis).
    * ``orthogonal_basis_correlation``: wa*wb = +1 when the angles differ by pi/2.
    * ``product_flip_in_b`` / ``product_flip_in_a``: the product wa*wb changes
      sign when either angle moves by pi/2.
    * ``sign_change_in_b`` / ``sign_change_in_a``: equivalently, across a pi/2
      step in one angle, exactly one of wa, wb changes sign.

    An empty list means the strategy passes.
    """
    wa = s.wa.astype(np.int16)
    wb = s.wb.astype(np.int16)
    prod = wa * wb
    idx = np.arange(GRID_SIZE)
    diff = np.abs(idx[:, None] - idx[None, :])
    h = HALF_PI
    checks = (
        ("same_basis_anticorrelation", np.isin(diff, (0, 2 * h)) & (prod != -1)),
        ("orthogonal_basis_correlation", (diff == h) & (prod != 1)),
        ("product_flip_in_b", prod[:, :-h] != -prod[:, h:]),
        ("sign_change_in_b", wa[:, :-h] * wa[:, h:] != -wb[:, :-h] * wb[:, h:]),
        ("product_flip_in_a", prod[:-h, :] != -prod[h:, :]),
        ("sign_change_in_a", wa[:-h, :] * wa[h:, :] != -wb[:-h, :] * wb[h:, :]),
    )
    out: list[Violation] = []
    for name, bad in checks:
        for a, b in np.argwhere(bad):
            detail = f"product {prod[a, b]:+d}" if name.endswith("correlation") else ""
            out.append(Violation(name, int(a), int(b), detail))
    return out


def passes_constraints(s: HVStrategy) -> bool:
    return not check_constraints(s)


def classify(s: HVStrategy) -> LocalityClass:
    """Local iff wa ignores b and wb ignores a everywhere on the grid."""
    wa_local = bool(np.all(s.wa == s.wa[:, :1]))
    wb_local = bool(np.all(s.wb == s.wb[:1, :]))
    return LocalityClass.LOCAL if wa_local and wb_local else LocalityClass.NONLOCAL


def _sign_str(values: Iterable[int]) -> str:
    return "".join("+" if v > 0 else "-" for v in values)


def _extend_local(t: Sequence[int]) -> np.ndarray:
    """Extend signs on k=0..3 to the grid with t(k + 4) = -t(k)."""
    full = np.empty(GRID_SIZE, dtype=np.int8)
    full[:HALF_PI] = t
    for k in range(HALF_PI, GRID_SIZE):
        full[k] = -full[k - HALF_PI]
    return full


def build_local(t) -> HVStrategy:
    """Local strategy from signs on the four free angles 0, pi/8, pi/4, 3pi/8.

    ``t`` is a length-4 sequence of +/-1 or a mapping from grid index to sign.
    Alice answers ``t(a)``, Bob answers ``-t(b)``.
    """
    if isinstance(t, Mapping):
        t = [t[k] for k in range(HALF_PI)]
    t = [int(v) for v in t]
    if len(t) != HALF_PI or any(v not in (1, -1) for v in t):
        raise ValueError(f"t must give +/-1 for each of the 4 free angles, got {t!r}")
    full = _extend_local(t)
    wa = np.repeat(full[:, None], GRID_SIZE, axis=1)
    wb = np.repeat(-full[None, :], GRID_SIZE, axis=0)
    return HVStrategy(f"local:{_sign_str(t)}", wa, wb)


def all_local_strategies() -> list[HVStrategy]:
    """The 16 local strategies, one per choice of ``t``."""
    return [build_local(t) for t in itertools.product((1, -1), repeat=HALF_PI)]


def pr_sign(d: int, eps: int) -> int:
    """Target product sign for a grid angle difference ``d`` (a - b).

    sign(-cos 2x) where it is defined; at the zeros the tie-break is ``+eps``
    for x = pi/4 (mod pi) and ``-eps`` for x = 3pi/4 (mod pi).
    """
    r = d % 8
    if r == 2:
        return eps
    if r == 6:
        return -eps
    return 1 if CORRELATION_TABLE[d % 8, 0] > 0 else -1


def build_pr_nonlocal(eps: int, s, nonlocal_side: Side | str = Side.A) -> HVStrategy:
    """Maximally non-local strategy with product wa*wb = pr_sign(a - b).

    ``s`` gives a sign for every grid angle (sequence of 9 or mapping).  For
    side A, Bob answers ``s(b)`` and Alice answers ``s(b) * pr_sign(a - b)``;
    side B mirrors this with Alice answering ``s(a)``.

    Every choice passes :func:`check_constraints` and reaches |CHSH| = 4.
    Eve is blind to the non-local party's answer across the other party's
    ``c`` only when ``s`` is pi/2-periodic (``s(k + 4) == s(k)``); see
    :func:`is_pi2_periodic`.
    """
    if eps not in (1, -1):
        raise ValueError(f"eps must be +1 or -1, got {eps!r}")
    side = Side(nonlocal_side)
    if isinstance(s, Mapping):
        missing = [k for k in range(GRID_SIZE) if k not in s]
        if missing:
            raise ValueError(f"s is not total on the grid; missing indices {missing}")
        s = [s[k] for k in range(GRID_SIZE)]
    s = [int(v) for v in s]
    if len(s) != GRID_SIZE or any(v not in (1, -1) for v in s):
        raise ValueError(f"s must assign +/-1 to all {GRID_SIZE} grid angles")
    sigma = np.array(
        [[pr_sign(a - b, eps) for b in range(GRID_SIZE)] for a in range(GRID_SIZE)], dtype=np.int8
    )
    sv = np.array(s, dtype=np.int8)
    if side is Side.A:
        wb = np.repeat(sv[None, :], GRID_SIZE, axis=0)
        wa = wb * sigma
    else:
        wa = np.repeat(sv[:, None], GRID_SIZE, axis=1)
        wb = wa * sigma
    lid = f"pr:{side.value}:eps{'+' if eps > 0 else '-'}:{_sign_str(s)}"
    return HVStrategy(lid, wa, wb)


def is_pi2_periodic(s: Sequence[int]) -> bool:
    return all(s[k] == s[k + HALF_PI] for k in range(GRID_SIZE - HALF_PI))


def periodic_sign_functions() -> list[tuple[int, ...]]:
    """The 16 sign functions on the grid with s(k + 4) == s(k)."""
    out = []
    for base in itertools.product((1, -1), repeat=HALF_PI):
        out.append(tuple(base[k % HALF_PI] for k in range(GRID_SIZE)))
    return out


@dataclass(frozen=True)
class ChshSetting:
    """Four grid angles and the sign applied to each correlator.

    ``signs`` multiply E(a1,b1), E(a1,b2), E(a2,b1), E(a2,b2) in that order.
    """

    a1: int
    a2: int
    b1: int
    b2: int
    signs: tuple[int, int, int, int] = (1, -1, 1, 1)

    def __post_init__(self):
        for k in (self.a1, self.a2, self.b1, self.b2):
            if not 0 <= k < GRID_SIZE:
                raise ValueError(f"CHSH angle index {k} is off the grid")
        if len(self.signs) != 4 or any(abs(x) != 1 for x in self.signs):
            raise ValueError("CHSH signs must be four values in {+1, -1}")

    def cells(self):
        """((a, b), sign) for the four correlators."""
        return (
            ((self.a1, self.b1), self.signs[0]),
            ((self.a1, self.b2), self.signs[1]),
            ((self.a2, self.b1), self.signs[2]),
            ((self.a2, self.b2), self.signs[3]),
        )


CANONICAL_SETTING = ChshSetting(a1=0, a2=2, b1=1, b2=3, signs=(1, -1, 1, 1))
SINGLET_CHSH = -2.0 * SQRT2


def chsh_value(s: HVStrategy, setting: ChshSetting = CANONICAL_SETTING) -> int:
    return int(sum(sign * int(s.wa[a, b]) * int(s.wb[a, b]) for (a, b), sign in setting.cells()))


def singlet_chsh(setting: ChshSetting = CANONICAL_SETTING) -> float:
    return float(sum(sign * CORRELATION_TABLE[a, b] for (a, b), sign in setting.cells()))


@dataclass(frozen=True)
class HVEnsemble:
    """Weighted hidden-variable strategies; weights are probabilities."""

    strategies: tuple[HVStrategy, ...]
    weights: tuple[float, ...]
    _tables: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        strategies = tuple(self.strategies)
        weights = tuple(float(w) for w in self.weights)
        if len(strategies) != len(weights) or not strategies:
            raise ValueError("ensemble needs one weight per strategy and at least one strategy")
        if any(w < 0 for w in weights):
            raise ValueError("ensemble weights must be non-negative")
        if abs(math.fsum(weights) - 1.0) > 1e-12:
            raise ValueError(f"ensemble weights sum to {math.fsum(weights)!r}, not 1")
        for s in strategies:
            bad = check_constraints(s)
            if bad:
                raise ValueError(f"strategy {s.lambda_id} fails constraints: {bad[0]}")
        object.__setattr__(self, "strategies", strategies)
        object.__setattr__(self, "weights", weights)
        tables = np.stack([np.stack([s.wa, s.wb]) for s in strategies])
        tables.setflags(write=False)
        object.__setattr__(self, "_tables", tables)

    def __len__(self):
        return len(self.strategies)

    @property
    def tables(self) -> np.ndarray:
        """int8 array of shape (n, 2, 9, 9): [strategy, party, a, b]."""
        return self._tables

    def classes(self) -> list[LocalityClass]:
        return [classify(s) for s in self.strategies]

    def nonlocal_weight(self) -> float:
        return math.fsum(w for s, w in zip(self.strategies, self.weights) if classify(s) is LocalityClass.NONLOCAL)

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Strategy indices for ``size`` independent rounds."""
        p = np.asarray(self.weights)
        return rng.choice(len(self.strategies), size=size, p=p / p.sum())

    @classmethod
    def uniform(cls, strategies: Sequence[HVStrategy]) -> "HVEnsemble":
        n = len(strategies)
        return cls(tuple(strategies), tuple([1.0 / n] * n))


def ensemble_chsh(ens: HVEnsemble, setting: ChshSetting = CANONICAL_SETTING) -> float:
    return math.fsum(w * chsh_value(s, setting) for s, w in zip(ens.strategies, ens.weights))


def aligned_local_strategies(setting: ChshSetting = CANONICAL_SETTING, target: int = -2) -> list[HVStrategy]:
    """Local strategies whose CHSH value on ``setting`` equals ``target``."""
    return [s for s in all_local_strategies() if chsh_value(s, setting) == target]


def min_nonlocal_fraction(target_chsh_abs: float) -> float:
    """Smallest non-local weight whose mixture with locals reaches |CHSH| = target.

    Solves f*4 + (1 - f)*2 = target using the per-class maxima.
    """
    if not 2.0 <= target_chsh_abs <= 4.0:
        raise ValueError(f"target |CHSH| must lie in [2, 4], got {target_chsh_abs!r}")
    return (target_chsh_abs - 2.0) / 2.0


def critical_ensemble(
    rng: np.random.Generator | None = None,
    *,
    n_per_side: int = 8,
    nonlocal_a: Sequence[HVStrategy] | None = None,
    nonlocal_b: Sequence[HVStrategy] | None = None,
    local: Sequence[HVStrategy] | None = None,
) -> HVEnsemble:
    """Mixture of weight sqrt(2)-1 non-local and 2-sqrt(2) local strategies.

    Its CHSH value on the canonical setting is exactly -2*sqrt(2).  By default
    the non-local part enumerates every pi/2-periodic ``s`` and both ``eps`` on
    each side (32 per side).  Passing ``rng`` instead samples ``n_per_side``
    parameter choices per side.  Explicit parts override either choice; within
    a part weights are equal, and the two non-local sides carry equal weight.
    """
    periodic = periodic_sign_functions()
    if nonlocal_a is None or nonlocal_b is None:
        if rng is None:
            params = [(e, s) for s in periodic for e in (1, -1)]
            pa = pb = params
        else:
            def pick():
                idx = rng.integers(0, len(periodic), size=n_per_side)
                eps = rng.choice((1, -1), size=n_per_side)
                return [(int(e), periodic[i]) for e, i in zip(eps, idx)]

            pa, pb = pick(), pick()
        if nonlocal_a is None:
            nonlocal_a = [build_pr_nonlocal(e, s, Side.A) for e, s in pa]
        if nonlocal_b is None:
            nonlocal_b = [build_pr_nonlocal(e, s, Side.B) for e, s in pb]
    if local is None:
        local = aligned_local_strategies()
    for s in (*nonlocal_a, *nonlocal_b):
        if chsh_value(s) != -4:
            raise ValueError(f"non-local part member {s.lambda_id} has CHSH {chsh_value(s)}, expected -4")
    for s in local:
        if chsh_value(s) != -2:
            raise ValueError(f"local part member {s.lambda_id} has CHSH {chsh_value(s)}, expected -2")
    f = min_nonlocal_fraction(2.0 * SQRT2)
    strategies = [*nonlocal_a, *nonlocal_b, *local]
    weights = (
        [f / 2 / len(nonlocal_a)] * len(nonlocal_a)
        + [f / 2 / len(nonlocal_b)] * len(nonlocal_b)
        + [(1.0 - f) / len(local)] * len(local)
    )
    return HVEnsemble(tuple(strategies), tuple(weights))


def local_only_ensemble() -> HVEnsemble:
    """The strongest purely local attack: the aligned locals (CHSH -2 each)."""
    return HVEnsemble.uniform(aligned_local_strategies())
