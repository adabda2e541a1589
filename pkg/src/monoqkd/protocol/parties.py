"""Alice and Bob as explicit state machines.

A :class:`Party` holds only its own basis choices and outcomes.  Everything it
learns about its partner arrives through :class:`Announcement` objects from
the public transcript.
"""

from __future__ import annotations

import enum

import numpy as np

from ..quantum_core import HALF_PI, to_bit, to_bits
from .messages import Announcement, Kind, Sender, TranscriptMessage


class ProtocolStateError(RuntimeError):
    """A party was asked to act out of phase order."""


class UndecodableBases(ValueError):
    """The two total angles are neither the same basis nor pi/2 apart."""


class InsufficientBits(ValueError):
    """Fewer decoded bits than one key block needs."""


class Phase(enum.Enum):
    MEASURED = "measured"
    TEST_REVEALED = "test_revealed"
    PHI_ANNOUNCED = "phi_announced"
    ENCODED = "encoded"
    DECODED = "decoded"
    DISTILLED = "distilled"
    ABORTED = "aborted"


def decodable(delta):
    """True where an angle difference (grid units) fixes the outcome relation.

    Differences of 0 or pi mean the same basis (anti-correlated outcomes);
    pi/2 means orthogonal bases (correlated outcomes).
    """
    return np.asarray(delta) % HALF_PI == 0


def phi_decodable(phi_a, phi_b):
    """Decodability from the public phi values alone.

    The hidden ``c`` values are multiples of pi/2, so they never change
    whether the total difference is a multiple of pi/2.
    """
    return decodable(np.asarray(phi_a) - np.asarray(phi_b))


def encode_round(chosen: Sender, c: int, outcome: int, r: int, round_id: int) -> TranscriptMessage:
    """EncodedBit message: the chosen party's ``c`` and ``r XOR bit(outcome)``."""
    if r not in (0, 1):
        raise ValueError(f"r must be a bit, got {r!r}")
    return TranscriptMessage(chosen, Kind.ENCODED_BIT, round_id, {"c": int(c), "m": r ^ to_bit(outcome)})


def decode_round(own_outcome: int, own_phi: int, own_c: int, partner_phi: int, partner_c: int, m: int) -> int:
    """Recover the partner's random bit ``r`` from the masked bit ``m``."""
    delta = abs((own_phi + own_c) - (partner_phi + partner_c))
    if delta == HALF_PI:
        partner_outcome = own_outcome
    elif delta in (0, 2 * HALF_PI):
        partner_outcome = -own_outcome
    else:
        raise UndecodableBases(f"angle difference {delta}*pi/8 is not 0, pi/2 or pi")
    return m ^ to_bit(partner_outcome)


class Party:
    """One lab.  Methods must be called in protocol order."""

    def __init__(self, name: Sender, phi: np.ndarray, c: np.ndarray, outcomes: np.ndarray):
        if name not in (Sender.ALICE, Sender.BOB):
            raise ValueError("a party is Alice or Bob")
        self.name = name
        self._phi = np.asarray(phi, dtype=np.int8)
        self._c = np.asarray(c, dtype=np.int8)
        self._outcomes = np.asarray(outcomes, dtype=np.int8)
        self.phase = Phase.MEASURED
        self._key_ids: np.ndarray | None = None
        self._partner_phi: np.ndarray | None = None
        self._chosen_self: np.ndarray | None = None
        self._r_sent: np.ndarray | None = None
        self._bits: np.ndarray | None = None
        self._usable: np.ndarray | None = None

    def _require(self, *phases: Phase):
        if self.phase not in phases:
            raise ProtocolStateError(
                f"{self.name.value} is in phase {self.phase.value}, expected {[p.value for p in phases]}"
            )

    def reveal_test(self, test_ids: np.ndarray) -> list[Announcement]:
        self._require(Phase.MEASURED)
        test_ids = np.asarray(test_ids, dtype=np.int64)
        self.phase = Phase.TEST_REVEALED
        return [
            Announcement(self.name, Kind.BASIS_REVEAL_FULL, test_ids,
                         {"phi": self._phi[test_ids], "c": self._c[test_ids]}),
            Announcement(self.name, Kind.OUTCOME_REVEAL, test_ids, {"outcome": self._outcomes[test_ids]}),
        ]

    def abort(self):
        self._require(Phase.MEASURED, Phase.TEST_REVEALED)
        self.phase = Phase.ABORTED

    def announce_phi(self, key_ids: np.ndarray) -> Announcement:
        self._require(Phase.TEST_REVEALED)
        self._key_ids = np.asarray(key_ids, dtype=np.int64)
        self.phase = Phase.PHI_ANNOUNCED
        return Announcement(self.name, Kind.PHI_REVEAL, self._key_ids, {"phi": self._phi[self._key_ids]})

    def receive_phi(self, ann: Announcement):
        self._require(Phase.PHI_ANNOUNCED)
        if ann.kind is not Kind.PHI_REVEAL or ann.sender is not self.name.partner():
            raise ProtocolStateError(f"{self.name.value} expected the partner's PhiReveal")
        if not np.array_equal(ann.round_ids, self._key_ids):
            raise ProtocolStateError("partner announced phi for a different set of rounds")
        self._partner_phi = ann.payload["phi"].astype(np.int8)

    def receive_roles(self, ann: Announcement):
        self._require(Phase.PHI_ANNOUNCED)
        if ann.kind is not Kind.ROLE_ASSIGNMENT or not np.array_equal(ann.round_ids, self._key_ids):
            raise ProtocolStateError("role assignment does not cover the key rounds")
        self._chosen_self = ann.payload["chosen"] == self.name.value

    def encode(self, r: np.ndarray) -> Announcement:
        """Mask fresh random bits ``r`` (one per round where this party is chosen)."""
        self._require(Phase.PHI_ANNOUNCED)
        if self._partner_phi is None or self._chosen_self is None:
            raise ProtocolStateError("encoding needs the partner's phi and the role assignment")
        ids = self._key_ids[self._chosen_self]
        r = np.asarray(r, dtype=np.uint8)
        if r.shape != ids.shape:
            raise ValueError(f"need {len(ids)} random bits, got {r.shape}")
        self._r_sent = r
        m = r ^ to_bits(self._outcomes[ids])
        self.phase = Phase.ENCODED
        return Announcement(self.name, Kind.ENCODED_BIT, ids, {"c": self._c[ids], "m": m})

    def decode(self, ann: Announcement) -> Announcement:
        """Decode the partner's EncodedBit; returns the Discard announcement."""
        self._require(Phase.ENCODED)
        if ann.kind is not Kind.ENCODED_BIT or ann.sender is not self.name.partner():
            raise ProtocolStateError(f"{self.name.value} expected the partner's EncodedBit")
        expected = self._key_ids[~self._chosen_self]
        if not np.array_equal(ann.round_ids, expected):
            raise ProtocolStateError("partner encoded bits for rounds where it was not chosen")
        ids = ann.round_ids
        pos = np.searchsorted(self._key_ids, ids)
        own_total = self._phi[ids].astype(np.int16) + self._c[ids]
        partner_total = self._partner_phi[pos].astype(np.int16) + ann.payload["c"]
        delta = np.abs(own_total - partner_total)
        ok = decodable(delta)
        own = self._outcomes[ids]
        partner_outcome = np.where(delta == HALF_PI, own, -own)
        decoded = ann.payload["m"].astype(np.uint8) ^ to_bits(partner_outcome)

        bits = np.zeros(len(self._key_ids), dtype=np.uint8)
        usable = np.ones(len(self._key_ids), dtype=bool)
        bits[self._chosen_self] = self._r_sent
        bits[pos] = decoded
        usable[pos] = ok
        # Rounds this party encoded are usable exactly when the public phi values say so.
        usable[self._chosen_self] = phi_decodable(self._phi[self._key_ids[self._chosen_self]],
                                                  self._partner_phi[self._chosen_self])
        self._bits = bits
        self._usable = usable
        self.phase = Phase.DECODED
        bad = ids[~ok]
        return Announcement(self.name, Kind.DISCARD, bad, {"reason": np.full(len(bad), "undecodable")})

    def shared_bits(self) -> tuple[np.ndarray, np.ndarray]:
        """(round_ids, bits) of usable key rounds, in round order."""
        self._require(Phase.DECODED, Phase.DISTILLED)
        return self._key_ids[self._usable], self._bits[self._usable]

    def distill(self, K: int):
        from .keys import distill_key

        self._require(Phase.DECODED)
        ids, bits = self.shared_bits()
        blocks = distill_key(bits, K, ids)
        self.phase = Phase.DISTILLED
        return blocks
