"""The five protocol steps and an end-to-end driver.

Rounds are held column-wise in a :class:`RoundTable` so that runs of a few
million rounds stay fast; indexing the table yields :class:`RoundRecord`
objects.  The hidden-variable index of each round (when the source is an
ensemble) lives on the table for later analysis but is never handed to a
:class:`~monoqkd.protocol.parties.Party`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field
from typing import Protocol

import numpy as np

from ..hv_adversary import CANONICAL_SETTING, ChshSetting, HVEnsemble
from ..quantum_core import HALF_PI, MeasurementBasis, Outcome, sample_singlet
from ..rng import RngStreams
from .keys import KeyBlock, distill_key
from .messages import Announcement, Kind, Sender, Transcript
from .parties import Party, phi_decodable

TARGET_CHSH = 2.0 * math.sqrt(2.0)


class InsufficientData(ValueError):
    """A required test cell has too few samples to estimate from."""


class PhaseTag(enum.Enum):
    TEST = "Test"
    KEY = "Key"
    DISCARDED = "Discarded"


_TAG_CODES = {0: None, 1: PhaseTag.TEST, 2: PhaseTag.KEY, 3: PhaseTag.DISCARDED}
UNTAGGED, TEST, KEY, DISCARDED = 0, 1, 2, 3


@dataclass
class ProtocolConfig:
    n_rounds: int = 2_000_000
    test_fraction: float = 0.5
    K: int = 20
    chsh_tolerance: float = 0.05
    correlation_tolerance: float = 0.0
    min_cell_samples: int = 30
    seed: int = 1

    def __post_init__(self):
        if self.n_rounds < 0:
            raise ValueError("n_rounds must be non-negative")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie strictly between 0 and 1")
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.n_rounds * (1.0 - self.test_fraction) < self.K:
            raise ValueError("n_rounds * (1 - test_fraction) must be at least K")
        if self.chsh_tolerance <= 0:
            raise ValueError("chsh_tolerance must be positive")
        if self.correlation_tolerance < 0:
            raise ValueError("correlation_tolerance must be non-negative")
        if self.min_cell_samples < 1:
            raise ValueError("min_cell_samples must be at least 1")

    def to_dict(self):
        return asdict(self)


class Source(Protocol):
    """Produces outcomes for given total angles (grid indices)."""

    name: str

    def measure(self, ka: np.ndarray, kb: np.ndarray, rngs: RngStreams):
        """Return (outcome_a, outcome_b, lambda_idx or None)."""


class IdealSource:
    name = "ideal"

    def measure(self, ka, kb, rngs):
        oa, ob = sample_singlet(ka, kb, rngs.quantum)
        return oa, ob, None


class EnsembleSource:
    """Deterministic outcomes from a hidden-variable ensemble, one lambda per round."""

    name = "ensemble"

    def __init__(self, ensemble: HVEnsemble):
        self.ensemble = ensemble

    def measure(self, ka, kb, rngs):
        lam = self.ensemble.draw(rngs.adversary, len(ka))
        t = self.ensemble.tables
        return t[lam, 0, ka, kb], t[lam, 1, ka, kb], lam


@dataclass(frozen=True)
class RoundRecord:
    round_id: int
    basis_a: MeasurementBasis
    basis_b: MeasurementBasis
    outcome_a: Outcome
    outcome_b: Outcome
    phase_tag: PhaseTag | None
    lambda_id: str | None = None

    def to_dict(self):
        return {
            "round_id": self.round_id,
            "basis_a": {"phi": self.basis_a.phi, "c": self.basis_a.c},
            "basis_b": {"phi": self.basis_b.phi, "c": self.basis_b.c},
            "outcome_a": int(self.outcome_a),
            "outcome_b": int(self.outcome_b),
            "phase_tag": None if self.phase_tag is None else self.phase_tag.value,
            "lambda_id": self.lambda_id,
        }


@dataclass
class RoundTable:
    """Column store of all rounds; ``phase`` uses UNTAGGED/TEST/KEY/DISCARDED."""

    phi_a: np.ndarray
    c_a: np.ndarray
    phi_b: np.ndarray
    c_b: np.ndarray
    outcome_a: np.ndarray
    outcome_b: np.ndarray
    lambda_idx: np.ndarray | None = None
    lambda_ids: tuple[str, ...] | None = None
    phase: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.phase is None:
            self.phase = np.zeros(len(self.phi_a), dtype=np.int8)

    def __len__(self):
        return len(self.phi_a)

    @property
    def ka(self) -> np.ndarray:
        return self.phi_a.astype(np.int64) + self.c_a

    @property
    def kb(self) -> np.ndarray:
        return self.phi_b.astype(np.int64) + self.c_b

    def __getitem__(self, i: int) -> RoundRecord:
        if not -len(self) <= i < len(self):
            raise IndexError(i)
        i = i % len(self)
        lam = None
        if self.lambda_idx is not None:
            lam = self.lambda_ids[self.lambda_idx[i]]
        return RoundRecord(
            round_id=i,
            basis_a=MeasurementBasis(int(self.phi_a[i]), int(self.c_a[i])),
            basis_b=MeasurementBasis(int(self.phi_b[i]), int(self.c_b[i])),
            outcome_a=Outcome(int(self.outcome_a[i])),
            outcome_b=Outcome(int(self.outcome_b[i])),
            phase_tag=_TAG_CODES[int(self.phase[i])],
            lambda_id=lam,
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def ids(self, tag: int) -> np.ndarray:
        return np.flatnonzero(self.phase == tag)


def draw_bases(rng: np.random.Generator, n: int):
    """Uniform (phi, c) over the 10 choices, as two int8 arrays."""
    code = rng.integers(0, 10, size=n)
    return (code // 2).astype(np.int8), (HALF_PI * (code % 2)).astype(np.int8)


def run_measurement_phase(config: ProtocolConfig, source: Source, rngs: RngStreams) -> RoundTable:
    """Step 1: independent uniform basis choices and one measurement per round."""
    n = config.n_rounds
    phi_a, c_a = draw_bases(rngs.alice_bases, n)
    phi_b, c_b = draw_bases(rngs.bob_bases, n)
    ka = phi_a.astype(np.int64) + c_a
    kb = phi_b.astype(np.int64) + c_b
    oa, ob, lam = source.measure(ka, kb, rngs)
    lambda_ids = None
    if lam is not None:
        lambda_ids = tuple(s.lambda_id for s in source.ensemble.strategies)
    return RoundTable(phi_a, c_a, phi_b, c_b, np.asarray(oa, np.int8), np.asarray(ob, np.int8), lam, lambda_ids)


def select_test_rounds(table: RoundTable, test_fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Step 2 selection: tag each round Test with probability ``test_fraction``, else Key.

    Returns the boolean Test mask.
    """
    if np.any(table.phase != UNTAGGED):
        raise ValueError("rounds are already tagged")
    if not 0.0 <= test_fraction <= 1.0:
        raise ValueError("test_fraction must lie in [0, 1]")
    test = rng.random(len(table)) < test_fraction
    table.phase[:] = np.where(test, TEST, KEY)
    return test


@dataclass
class PublicTestData:
    """Revealed total angles and outcomes of the Test rounds."""

    ka: np.ndarray
    kb: np.ndarray
    oa: np.ndarray
    ob: np.ndarray

    @classmethod
    def from_transcript(cls, transcript: Transcript) -> "PublicTestData":
        ba = transcript.one(Kind.BASIS_REVEAL_FULL, Sender.ALICE)
        bb = transcript.one(Kind.BASIS_REVEAL_FULL, Sender.BOB)
        oa = transcript.one(Kind.OUTCOME_REVEAL, Sender.ALICE)
        ob = transcript.one(Kind.OUTCOME_REVEAL, Sender.BOB)
        if not (np.array_equal(ba.round_ids, bb.round_ids) and np.array_equal(ba.round_ids, oa.round_ids)
                and np.array_equal(ba.round_ids, ob.round_ids)):
            raise ValueError("test reveals cover different rounds")
        return cls(
            ba.payload["phi"].astype(np.int64) + ba.payload["c"],
            bb.payload["phi"].astype(np.int64) + bb.payload["c"],
            oa.payload["outcome"].astype(np.int64),
            ob.payload["outcome"].astype(np.int64),
        )

    @classmethod
    def from_table(cls, table: RoundTable, mask=None) -> "PublicTestData":
        mask = slice(None) if mask is None else mask
        return cls(table.ka[mask], table.kb[mask], table.outcome_a[mask].astype(np.int64),
                   table.outcome_b[mask].astype(np.int64))


@dataclass
class CorrelationCheck:
    a: int
    b: int
    expected: int
    empirical: float
    n: int
    ok: bool


@dataclass
class Estimation:
    chsh_estimate: float
    chsh_cells: dict[tuple[int, int], tuple[float, int]]
    correlation_checks: list[CorrelationCheck]
    abort: bool
    reasons: list[str]

    def to_dict(self):
        return {
            "chsh_estimate": self.chsh_estimate,
            "chsh_cells": [{"a": a, "b": b, "correlation": e, "n": n} for (a, b), (e, n) in self.chsh_cells.items()],
            "correlation_failures": [asdict(c) for c in self.correlation_checks if not c.ok],
            "n_correlation_cells": len(self.correlation_checks),
            "abort": self.abort,
            "reasons": self.reasons,
        }


def parameter_estimation(test: PublicTestData, setting: ChshSetting = CANONICAL_SETTING,
                         config: ProtocolConfig | None = None) -> Estimation:
    """Step 2 checks: CHSH on the setting's four cells plus perfect (anti-)correlations.

    Aborts when | |S| - 2*sqrt(2) | exceeds ``chsh_tolerance``, when any
    same-basis cell (angles equal or pi apart) has correlation above
    ``-1 + correlation_tolerance``, or when any pi/2-apart cell has correlation
    below ``1 - correlation_tolerance``.
    """
    config = config or ProtocolConfig()
    cell = test.ka * 9 + test.kb
    prod = test.oa * test.ob
    counts = np.bincount(cell, minlength=81)
    sums = np.bincount(cell, weights=prod, minlength=81)

    chsh_cells = {}
    s = 0.0
    for (a, b), sign in setting.cells():
        n = int(counts[a * 9 + b])
        if n < config.min_cell_samples:
            raise InsufficientData(f"CHSH cell (a={a}, b={b}) has {n} samples, need {config.min_cell_samples}")
        e = float(sums[a * 9 + b] / n)
        chsh_cells[(a, b)] = (e, n)
        s += sign * e

    checks = []
    pooled = {-1: 0, 1: 0}
    for a in range(9):
        for b in range(9):
            d = abs(a - b)
            if d not in (0, HALF_PI, 2 * HALF_PI):
                continue
            n = int(counts[a * 9 + b])
            expected = 1 if d == HALF_PI else -1
            pooled[expected] += n
            if n == 0:
                continue
            e = float(sums[a * 9 + b] / n)
            if expected == -1:
                ok = e <= -1.0 + config.correlation_tolerance
            else:
                ok = e >= 1.0 - config.correlation_tolerance
            checks.append(CorrelationCheck(a, b, expected, e, n, ok))
    for expected, n in pooled.items():
        if n < config.min_cell_samples:
            label = "same-basis" if expected == -1 else "orthogonal-basis"
            raise InsufficientData(f"{label} test rounds: {n}, need {config.min_cell_samples}")

    reasons = []
    if abs(abs(s) - TARGET_CHSH) > config.chsh_tolerance:
        reasons.append(f"CHSH estimate {s:.6f} differs from 2*sqrt(2) by more than {config.chsh_tolerance}")
    bad = [c for c in checks if not c.ok]
    if bad:
        reasons.append(f"{len(bad)} perfect-correlation cells failed, first at (a={bad[0].a}, b={bad[0].b})")
    return Estimation(s, chsh_cells, checks, bool(reasons), reasons)


def assign_roles(key_ids: np.ndarray, rng: np.random.Generator) -> Announcement:
    """Step 4 coin: the referee picks Alice or Bob uniformly for every key round."""
    key_ids = np.asarray(key_ids, dtype=np.int64)
    pick = rng.integers(0, 2, size=len(key_ids))
    names = np.array([Sender.ALICE.value, Sender.BOB.value])[pick]
    return Announcement(Sender.REFEREE, Kind.ROLE_ASSIGNMENT, key_ids, {"chosen": names})


class RunStatus(str, enum.Enum):
    COMPLETED = "completed"
    ABORTED = "aborted"


@dataclass
class ProtocolRun:
    config: ProtocolConfig
    source_name: str
    table: RoundTable
    transcript: Transcript
    estimation: Estimation
    status: RunStatus
    alice_blocks: list[KeyBlock] = field(default_factory=list)
    bob_blocks: list[KeyBlock] = field(default_factory=list)
    key_ids: np.ndarray | None = None
    r_truth: np.ndarray | None = None
    """Random bit r the chosen party encoded, per key round (audit only)."""
    ensemble: HVEnsemble | None = None

    @property
    def aborted(self) -> bool:
        return self.status is RunStatus.ABORTED

    def keys_agree(self) -> bool:
        return [b.key_bit for b in self.alice_blocks] == [b.key_bit for b in self.bob_blocks]


def run_protocol(config: ProtocolConfig, source: Source | None = None, rngs: RngStreams | None = None,
                 setting: ChshSetting = CANONICAL_SETTING) -> ProtocolRun:
    """Run Steps 1-5 and return the full record of the run."""
    source = source or IdealSource()
    rngs = rngs or RngStreams(config.seed)
    transcript = Transcript()

    table = run_measurement_phase(config, source, rngs)
    alice = Party(Sender.ALICE, table.phi_a, table.c_a, table.outcome_a)
    bob = Party(Sender.BOB, table.phi_b, table.c_b, table.outcome_b)

    select_test_rounds(table, config.test_fraction, rngs.round_selection)
    test_ids = table.ids(TEST)
    for party in (alice, bob):
        for ann in party.reveal_test(test_ids):
            transcript.post(ann)
    est = parameter_estimation(PublicTestData.from_transcript(transcript), setting, config)
    if est.abort:
        transcript.post(Announcement(Sender.ALICE, Kind.ABORT, None,
                                     {"reason": "; ".join(est.reasons), "chsh_estimate": est.chsh_estimate}))
        alice.abort()
        bob.abort()
        return ProtocolRun(config, source.name, table, transcript, est, RunStatus.ABORTED,
                           ensemble=getattr(source, "ensemble", None))

    key_ids = table.ids(KEY)
    pa = transcript.post(alice.announce_phi(key_ids))
    pb = transcript.post(bob.announce_phi(key_ids))
    alice.receive_phi(pb)
    bob.receive_phi(pa)

    roles = transcript.post(assign_roles(key_ids, rngs.role_selection))
    alice.receive_roles(roles)
    bob.receive_roles(roles)

    r = rngs.random_bits.integers(0, 2, size=len(key_ids)).astype(np.uint8)
    alice_chosen = roles.payload["chosen"] == Sender.ALICE.value
    ea = transcript.post(alice.encode(r[alice_chosen]))
    eb = transcript.post(bob.encode(r[~alice_chosen]))
    transcript.post(alice.decode(eb))
    transcript.post(bob.decode(ea))

    usable = phi_decodable(table.phi_a[key_ids], table.phi_b[key_ids])
    table.phase[key_ids[~usable]] = DISCARDED

    alice_blocks = alice.distill(config.K)
    bob_blocks = bob.distill(config.K)
    return ProtocolRun(config, source.name, table, transcript, est, RunStatus.COMPLETED,
                       alice_blocks, bob_blocks, key_ids, r, getattr(source, "ensemble", None))
