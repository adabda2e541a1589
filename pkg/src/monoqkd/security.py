"""What a hidden-variable eavesdropper learns about the key.

Eve sees the public transcript and, through the hidden-variable side channel,
the value of lambda for every round together with the outcome tables it
selects.  She never sees the ``c`` of the party that was not chosen to
encode, and she measures nothing.  For each encoded bit she evaluates the
chosen party's outcome function at both candidate values of that hidden
``c``: if they agree she knows the bit, otherwise she does not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .hv_adversary import HVEnsemble, HVStrategy, LocalityClass, classify
from .protocol.engine import ProtocolRun
from .protocol.keys import block_parities
from .protocol.messages import Kind, Sender, Transcript
from .protocol.parties import phi_decodable
from .quantum_core import HALF_PI, to_bit, to_bits

P_THEORY = (3.0 - math.sqrt(2.0)) / 2.0


def p_theory(K: int = 1) -> float:
    """Probability that Eve knows a K-bit XOR key bit: ((3 - sqrt 2)/2)**K."""
    return P_THEORY**K


@dataclass(frozen=True)
class Verdict:
    known: bool
    r: int | None = None

    def __post_init__(self):
        if self.known != (self.r is not None):
            raise ValueError("a Known verdict carries r; Unknown carries nothing")


UNKNOWN = Verdict(False)


def Known(r: int) -> Verdict:
    return Verdict(True, int(r))


@dataclass(frozen=True)
class EveRoundView:
    """Everything Eve holds about one encoded round.

    There is deliberately no field for the hidden ``c`` of the party that did
    not encode.
    """

    strategy: HVStrategy | None
    phi_a: int
    phi_b: int
    chosen: Sender
    chosen_c: int
    m: int


def _candidates(view: EveRoundView):
    """Outcome of the chosen party for each value of the other party's hidden c."""
    s = view.strategy
    if view.chosen is Sender.ALICE:
        a = view.phi_a + view.chosen_c
        return [int(s.wa[a, view.phi_b + c]) for c in (0, HALF_PI)]
    b = view.phi_b + view.chosen_c
    return [int(s.wb[view.phi_a + c, b]) for c in (0, HALF_PI)]


def eve_decode(view: EveRoundView) -> Verdict:
    if view.strategy is None:
        return UNKNOWN
    w0, w1 = _candidates(view)
    if w0 != w1:
        return UNKNOWN
    return Known(view.m ^ to_bit(w0))


@dataclass(frozen=True)
class EveRoundResult:
    verdict: Verdict
    r_actual: int
    round_id: int | None = None


@dataclass
class EveView:
    """Column-wise Eve view of every usable key round of a run."""

    round_ids: np.ndarray
    phi_a: np.ndarray
    phi_b: np.ndarray
    alice_chosen: np.ndarray
    chosen_c: np.ndarray
    m: np.ndarray
    lambda_idx: np.ndarray | None = None
    ensemble: HVEnsemble | None = None

    def __len__(self):
        return len(self.round_ids)

    def round(self, i: int) -> EveRoundView:
        strategy = None
        if self.ensemble is not None:
            strategy = self.ensemble.strategies[int(self.lambda_idx[i])]
        return EveRoundView(strategy, int(self.phi_a[i]), int(self.phi_b[i]),
                            Sender.ALICE if self.alice_chosen[i] else Sender.BOB,
                            int(self.chosen_c[i]), int(self.m[i]))


@dataclass(frozen=True)
class SideChannel:
    """Eve's hidden-variable knowledge: lambda for each round id, and the ensemble."""

    lambda_idx: np.ndarray
    ensemble: HVEnsemble


def build_eve_view(transcript: Transcript, side_channel: SideChannel | None = None) -> EveView:
    """Assemble Eve's view from public announcements plus the lambda side channel."""
    pa = transcript.one(Kind.PHI_REVEAL, Sender.ALICE)
    pb = transcript.one(Kind.PHI_REVEAL, Sender.BOB)
    key_ids = pa.round_ids
    ea = transcript.one(Kind.ENCODED_BIT, Sender.ALICE)
    eb = transcript.one(Kind.ENCODED_BIT, Sender.BOB)

    n = len(key_ids)
    alice_chosen = np.zeros(n, dtype=bool)
    chosen_c = np.zeros(n, dtype=np.int8)
    m = np.zeros(n, dtype=np.uint8)
    for ann, is_alice in ((ea, True), (eb, False)):
        pos = np.searchsorted(key_ids, ann.round_ids)
        alice_chosen[pos] = is_alice
        chosen_c[pos] = ann.payload["c"]
        m[pos] = ann.payload["m"]
    usable = phi_decodable(pa.payload["phi"], pb.payload["phi"])
    ids = key_ids[usable]
    lam = None
    ens = None
    if side_channel is not None:
        lam = side_channel.lambda_idx[ids]
        ens = side_channel.ensemble
    return EveView(ids, pa.payload["phi"][usable], pb.payload["phi"][usable], alice_chosen[usable],
                   chosen_c[usable], m[usable], lam, ens)


@dataclass
class EveResults:
    """Per-round outcome of Eve's decoding, column-wise."""

    round_ids: np.ndarray
    known: np.ndarray
    r_eve: np.ndarray
    guess: np.ndarray
    r_actual: np.ndarray
    nonlocal_: np.ndarray | None = None

    def __len__(self):
        return len(self.round_ids)

    def rounds(self) -> list[EveRoundResult]:
        return [
            EveRoundResult(Known(int(self.r_eve[i])) if self.known[i] else UNKNOWN, int(self.r_actual[i]),
                           int(self.round_ids[i]))
            for i in range(len(self))
        ]


def eve_decode_batch(view: EveView, r_actual: np.ndarray, rng: np.random.Generator) -> EveResults:
    """Vectorised :func:`eve_decode` plus a uniform guess on Unknown rounds.

    ``r_actual`` is the truth for auditing and scoring only; no verdict or
    guess depends on it.
    """
    n = len(view)
    coin = rng.integers(0, 2, size=n)
    if view.ensemble is None:
        known = np.zeros(n, dtype=bool)
        r_eve = np.zeros(n, dtype=np.uint8)
        guess = coin.astype(np.uint8)
        nonlocal_ = None
    else:
        t = view.ensemble.tables
        lam = view.lambda_idx
        phi_a = view.phi_a.astype(np.int64)
        phi_b = view.phi_b.astype(np.int64)
        a_known = phi_a + view.chosen_c
        b_known = phi_b + view.chosen_c
        wa0 = t[lam, 0, a_known, phi_b]
        wa1 = t[lam, 0, a_known, phi_b + HALF_PI]
        wb0 = t[lam, 1, phi_a, b_known]
        wb1 = t[lam, 1, phi_a + HALF_PI, b_known]
        w0 = np.where(view.alice_chosen, wa0, wb0)
        w1 = np.where(view.alice_chosen, wa1, wb1)
        known = w0 == w1
        r_eve = view.m ^ to_bits(w0)
        guess = view.m ^ to_bits(np.where(coin == 1, w1, w0))
        is_nonlocal = np.array([classify(s) is LocalityClass.NONLOCAL for s in view.ensemble.strategies])
        nonlocal_ = is_nonlocal[lam]
    r_eve = np.where(known, r_eve, 0).astype(np.uint8)
    guess = np.where(known, r_eve, guess).astype(np.uint8)
    return EveResults(view.round_ids, known, r_eve, guess, np.asarray(r_actual, dtype=np.uint8), nonlocal_)


def _known_mask(results) -> np.ndarray:
    if isinstance(results, EveResults):
        return results.known
    return np.array([r.verdict.known for r in results], dtype=bool)


def empirical_certainty(results) -> float:
    """Fraction of rounds with a Known verdict."""
    known = _known_mask(results)
    return float(known.mean()) if len(known) else float("nan")


def certainty_soundness_audit(results) -> list[EveRoundResult]:
    """Every round where Eve claimed to know r and was wrong (empty list = pass)."""
    if isinstance(results, EveResults):
        bad = results.known & (results.r_eve != results.r_actual)
        return [results.rounds()[i] for i in np.flatnonzero(bad)] if bad.any() else []
    return [r for r in results if r.verdict.known and r.verdict.r != r.r_actual]


@dataclass
class KeyExposure:
    K: int
    n_blocks: int
    P_empirical: float
    P_theory: float
    eve_guess_rate: float


def key_exposure(known: Sequence[bool], guess: Sequence[int], r_actual: Sequence[int], K: int) -> KeyExposure:
    """Block-level exposure over consecutive K-round blocks.

    A block is known when all its rounds are Known.  Eve's key-bit guess is
    the XOR of her per-round bits (exact where Known, guessed otherwise).
    """
    known = np.asarray(known, dtype=bool)
    n = len(known) // K
    if n == 0:
        return KeyExposure(K, 0, float("nan"), p_theory(K), float("nan"))
    block_known = known[: n * K].reshape(n, K).all(axis=1)
    eve_bits = block_parities(guess, K)
    true_bits = block_parities(r_actual, K)
    return KeyExposure(K, n, float(block_known.mean()), p_theory(K), float((eve_bits == true_bits).mean()))


@dataclass
class SecurityReport:
    K: int
    n_key_rounds: int
    p_empirical: float | None
    p_theory: float
    local_certainty: float | None
    nonlocal_certainty: float | None
    n_blocks: int
    P_empirical: float | None
    P_theory: float
    eve_guess_rate: float
    soundness_counterexamples: int
    lambda_channel: bool

    def to_dict(self):
        """Report fields; the lambda-dependent ones are left out when Eve had no lambda channel."""
        d = {
            "K": self.K,
            "n_key_rounds": self.n_key_rounds,
            "p_theory": self.p_theory,
            "key_blocks": {
                "count": self.n_blocks,
                "P_theory": self.P_theory,
                "eve_guess_rate": self.eve_guess_rate,
            },
            "soundness_counterexamples": self.soundness_counterexamples,
            "lambda_channel": self.lambda_channel,
        }
        if self.lambda_channel:
            d["p_empirical"] = self.p_empirical
            d["per_class"] = {"local": self.local_certainty, "nonlocal": self.nonlocal_certainty}
            d["key_blocks"]["P_empirical"] = self.P_empirical
        return d


def eve_results_for_run(run: ProtocolRun, rng: np.random.Generator, use_lambda: bool = True) -> EveResults:
    """Decode every usable key round of a completed run from Eve's position."""
    if run.aborted:
        raise ValueError("an aborted run has no key rounds to attack")
    side = None
    if use_lambda and run.table.lambda_idx is not None:
        side = SideChannel(run.table.lambda_idx, run.ensemble)
    view = build_eve_view(run.transcript, side)
    pos = np.searchsorted(run.key_ids, view.round_ids)
    return eve_decode_batch(view, run.r_truth[pos], rng)


def analyze(run: ProtocolRun, rng: np.random.Generator, use_lambda: bool = True) -> SecurityReport:
    res = eve_results_for_run(run, rng, use_lambda)
    channel = res.nonlocal_ is not None
    K = run.config.K
    exposure = key_exposure(res.known, res.guess, res.r_actual, K)
    local_rate = nonlocal_rate = None
    if channel:
        if (~res.nonlocal_).any():
            local_rate = float(res.known[~res.nonlocal_].mean())
        if res.nonlocal_.any():
            nonlocal_rate = float(res.known[res.nonlocal_].mean())
    return SecurityReport(
        K=K,
        n_key_rounds=len(res),
        p_empirical=empirical_certainty(res) if channel else None,
        p_theory=P_THEORY,
        local_certainty=local_rate,
        nonlocal_certainty=nonlocal_rate,
        n_blocks=exposure.n_blocks,
        P_empirical=exposure.P_empirical if channel else None,
        P_theory=exposure.P_theory,
        eve_guess_rate=exposure.eve_guess_rate,
        soundness_counterexamples=len(certainty_soundness_audit(res)),
        lambda_channel=channel,
    )
