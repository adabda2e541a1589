"""Public classical-channel messages and the append-only transcript.

Each protocol step is a bulk announcement (one :class:`Announcement` per
sender and step, holding one column per payload field).  Iterating a
:class:`Transcript` expands announcements into per-round
:class:`TranscriptMessage` objects in the order they were posted.

Angles in payloads are integers in units of pi/8.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Iterator

import numpy as np


class Sender(str, enum.Enum):
    ALICE = "Alice"
    BOB = "Bob"
    REFEREE = "Referee"

    def partner(self) -> "Sender":
        if self is Sender.ALICE:
            return Sender.BOB
        if self is Sender.BOB:
            return Sender.ALICE
        raise ValueError("the referee has no partner")


class Kind(str, enum.Enum):
    BASIS_REVEAL_FULL = "BasisRevealFull"
    OUTCOME_REVEAL = "OutcomeReveal"
    PHI_REVEAL = "PhiReveal"
    ROLE_ASSIGNMENT = "RoleAssignment"
    ENCODED_BIT = "EncodedBit"
    DISCARD = "Discard"
    ABORT = "Abort"


PAYLOAD_FIELDS: dict[Kind, tuple[str, ...]] = {
    Kind.BASIS_REVEAL_FULL: ("phi", "c"),
    Kind.OUTCOME_REVEAL: ("outcome",),
    Kind.PHI_REVEAL: ("phi",),
    Kind.ROLE_ASSIGNMENT: ("chosen",),
    Kind.ENCODED_BIT: ("c", "m"),
    Kind.DISCARD: ("reason",),
    Kind.ABORT: ("reason", "chsh_estimate"),
}


@dataclass(frozen=True)
class TranscriptMessage:
    sender: Sender
    kind: Kind
    round_id: int | None
    payload: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {
            "sender": self.sender.value,
            "kind": self.kind.value,
            "round_id": self.round_id,
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TranscriptMessage":
        return cls(Sender(d["sender"]), Kind(d["kind"]), d["round_id"], dict(d["payload"]))


@dataclass
class Announcement:
    """One bulk message: a payload column per field, one row per round.

    Round-less messages (``Abort``) use ``round_ids=None`` and scalar payload
    values.
    """

    sender: Sender
    kind: Kind
    round_ids: np.ndarray | None
    payload: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        expected = set(PAYLOAD_FIELDS[self.kind])
        if set(self.payload) != expected:
            raise ValueError(f"{self.kind.value} payload must have fields {sorted(expected)}, got {sorted(self.payload)}")
        if self.round_ids is not None:
            self.round_ids = np.asarray(self.round_ids, dtype=np.int64)
            for name, col in self.payload.items():
                col = np.asarray(col)
                if col.shape != self.round_ids.shape:
                    raise ValueError(f"payload column {name!r} has shape {col.shape}, expected {self.round_ids.shape}")
                self.payload[name] = col

    def __len__(self):
        return 1 if self.round_ids is None else len(self.round_ids)

    def messages(self) -> Iterator[TranscriptMessage]:
        if self.round_ids is None:
            yield TranscriptMessage(self.sender, self.kind, None, dict(self.payload))
            return
        cols = {k: v.tolist() for k, v in self.payload.items()}
        for i, rid in enumerate(self.round_ids.tolist()):
            yield TranscriptMessage(self.sender, self.kind, rid, {k: v[i] for k, v in cols.items()})


class Transcript:
    """Append-only record of everything said on the public channel."""

    def __init__(self):
        self._entries: list[Announcement] = []

    def post(self, announcement: Announcement) -> Announcement:
        self._entries.append(announcement)
        return announcement

    @property
    def announcements(self) -> tuple[Announcement, ...]:
        return tuple(self._entries)

    def find(self, kind: Kind, sender: Sender | None = None) -> list[Announcement]:
        return [a for a in self._entries if a.kind is kind and (sender is None or a.sender is sender)]

    def one(self, kind: Kind, sender: Sender | None = None) -> Announcement:
        found = self.find(kind, sender)
        if len(found) != 1:
            raise LookupError(f"expected one {kind.value} announcement from {sender}, found {len(found)}")
        return found[0]

    def __iter__(self) -> Iterator[TranscriptMessage]:
        for a in self._entries:
            yield from a.messages()

    def __len__(self):
        return sum(len(a) for a in self._entries)
