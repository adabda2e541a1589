"""Transcript hygiene checks, run by an auditor who can see the private round table."""

from __future__ import annotations

import numpy as np

from .engine import KEY, TEST, DISCARDED, RoundTable
from .messages import PAYLOAD_FIELDS, Kind, Sender, Transcript

_STEP = {
    Kind.BASIS_REVEAL_FULL: 2,
    Kind.OUTCOME_REVEAL: 2,
    Kind.ABORT: 2,
    Kind.PHI_REVEAL: 3,
    Kind.ROLE_ASSIGNMENT: 4,
    Kind.ENCODED_BIT: 4,
    Kind.DISCARD: 4,
}


def audit_transcript(transcript: Transcript, table: RoundTable) -> list[str]:
    """Problems found in ``transcript`` (an empty list means it is clean).

    Checks that steps appear in order, that test reveals cover only Test
    rounds, that PhiReveal carries phi alone, that every key round has exactly
    one EncodedBit sent by the assigned party carrying that party's own ``c``,
    and that nothing on the channel mentions a hidden-variable identifier.
    """
    problems = []
    step = 0
    in_test = np.isin(table.phase, (TEST,))
    in_key = np.isin(table.phase, (KEY, DISCARDED))
    lambda_ids = set(table.lambda_ids or ())
    chosen = {}
    encoded_count = np.zeros(len(table), dtype=np.int64)
    own_c = {Sender.ALICE: table.c_a, Sender.BOB: table.c_b}

    for ann in transcript.announcements:
        s = _STEP[ann.kind]
        if s < step:
            problems.append(f"{ann.kind.value} from {ann.sender.value} posted after step {step}")
        step = max(step, s)
        if set(ann.payload) != set(PAYLOAD_FIELDS[ann.kind]):
            problems.append(f"{ann.kind.value} payload fields {sorted(ann.payload)}")
        if any("lambda" in k.lower() for k in ann.payload):
            problems.append(f"{ann.kind.value} payload names a hidden variable")
        for col in ann.payload.values():
            vals = np.atleast_1d(np.asarray(col))
            if vals.dtype.kind in "US" and lambda_ids & set(vals.tolist()):
                problems.append(f"{ann.kind.value} payload carries a hidden-variable id")
        if ann.round_ids is None:
            continue
        ids = ann.round_ids
        if ann.kind in (Kind.BASIS_REVEAL_FULL, Kind.OUTCOME_REVEAL) and not in_test[ids].all():
            problems.append(f"{ann.kind.value} from {ann.sender.value} reveals non-test rounds")
        if ann.kind in (Kind.PHI_REVEAL, Kind.ROLE_ASSIGNMENT, Kind.ENCODED_BIT) and not in_key[ids].all():
            problems.append(f"{ann.kind.value} covers rounds that are not key rounds")
        if ann.kind is Kind.ROLE_ASSIGNMENT:
            chosen.update(zip(ids.tolist(), ann.payload["chosen"].tolist()))
        if ann.kind is Kind.ENCODED_BIT:
            encoded_count[ids] += 1
            wrong_sender = [r for r in ids.tolist() if chosen.get(r) != ann.sender.value]
            if wrong_sender:
                problems.append(f"EncodedBit from {ann.sender.value} for {len(wrong_sender)} rounds it was not assigned")
            if not np.array_equal(ann.payload["c"], own_c[ann.sender][ids]):
                problems.append(f"EncodedBit from {ann.sender.value} carries a c that is not its own")
            if not np.isin(ann.payload["m"], (0, 1)).all():
                problems.append("EncodedBit m is not a bit")

    if transcript.find(Kind.PHI_REVEAL):
        key_ids = np.flatnonzero(in_key)
        if not (encoded_count[key_ids] == 1).all():
            problems.append("some key round does not have exactly one EncodedBit")
    if (encoded_count[~in_key] > 0).any():
        problems.append("EncodedBit sent for a non-key round")
    return problems
