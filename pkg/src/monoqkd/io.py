"""JSON document formats for ensembles, transcripts, round records and reports.

All documents are UTF-8 JSON.  Transcripts and round records are JSON Lines
(one object per line).  Floats are written with ``repr`` precision, which
round-trips exactly.  Angles are integers in units of pi/8.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .hv_adversary import (
    HVEnsemble,
    HVStrategy,
    LocalityClass,
    chsh_value,
    check_constraints,
    classify,
)
from .protocol.engine import RoundTable
from .protocol.keys import KeyBlock
from .protocol.messages import Transcript, TranscriptMessage

ENSEMBLE_FORMAT = "monoqkd-ensemble"
REPORT_FORMAT = "monoqkd-report"
CONFIG_FORMAT = "monoqkd-config"
FORMAT_VERSION = 1
OUTPUT_DIR_ENV = "MONOQKD_OUTPUT_DIR"


class FormatError(ValueError):
    """A document could not be parsed into the expected structure."""


def output_path(path: str | os.PathLike) -> Path:
    """Resolve a relative output path against ``$MONOQKD_OUTPUT_DIR`` if set."""
    p = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    return p


def dumps(doc: Any) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, doc: Any) -> Path:
    p = output_path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(dumps(doc), encoding="utf-8")
    return p


def read_json(path) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc


def parse_weight(value) -> float:
    """Weight from a JSON number or an exact string such as ``"1/8"``."""
    if isinstance(value, bool):
        raise FormatError(f"weight {value!r} is not a number")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError) as exc:
            raise FormatError(f"weight {value!r} is not a decimal or rational") from exc
    raise FormatError(f"weight {value!r} is not a number")


def ensemble_to_doc(ens: HVEnsemble) -> dict:
    return {
        "format": ENSEMBLE_FORMAT,
        "version": FORMAT_VERSION,
        "angle_unit": "pi/8",
        "table_layout": "rows index a, columns index b, grid 0..8",
        "strategies": [
            {"lambda_id": s.lambda_id, "weight": w, "wa": s.wa.tolist(), "wb": s.wb.tolist()}
            for s, w in zip(ens.strategies, ens.weights)
        ],
    }


def save_ensemble(path, ens: HVEnsemble) -> Path:
    return write_json(path, ensemble_to_doc(ens))


def _raw_members(doc) -> list[tuple[HVStrategy, float]]:
    if not isinstance(doc, dict) or doc.get("format") != ENSEMBLE_FORMAT:
        raise FormatError(f"not a {ENSEMBLE_FORMAT} document")
    members = doc.get("strategies")
    if not isinstance(members, list) or not members:
        raise FormatError("ensemble has no strategies")
    out = []
    for i, m in enumerate(members):
        try:
            s = HVStrategy(str(m["lambda_id"]), np.array(m["wa"]), np.array(m["wb"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"strategy #{i}: {exc}") from exc
        out.append((s, parse_weight(m.get("weight"))))
    return out


def ensemble_from_doc(doc) -> HVEnsemble:
    members = _raw_members(doc)
    try:
        return HVEnsemble(tuple(s for s, _ in members), tuple(w for _, w in members))
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def load_ensemble(path) -> HVEnsemble:
    return ensemble_from_doc(read_json(path))


@dataclass
class EnsembleValidation:
    ok: bool
    violations: list[str] = field(default_factory=list)
    weight_sum: float = math.nan
    nonlocal_weight: float = math.nan
    members: list[dict] = field(default_factory=list)

    def to_dict(self):
        return {
            "ok": self.ok,
            "violations": self.violations,
            "weight_sum": self.weight_sum,
            "nonlocal_weight": self.nonlocal_weight,
            "members": self.members,
        }


def validate_ensemble(path) -> EnsembleValidation:
    """Check every strategy and the weights of a serialized ensemble.

    Raises :class:`FormatError` when the file cannot be parsed at all.
    """
    members = _raw_members(read_json(path))
    violations = []
    rows = []
    nonlocal_w = []
    weights = []
    for s, w in members:
        bad = check_constraints(s)
        violations.extend(f"{s.lambda_id}: {v}" for v in bad)
        cls = classify(s)
        if cls is LocalityClass.NONLOCAL:
            nonlocal_w.append(w)
        if w < 0:
            violations.append(f"{s.lambda_id}: negative weight {w!r}")
        weights.append(w)
        rows.append({"lambda_id": s.lambda_id, "weight": w, "class": cls.value,
                     "chsh": chsh_value(s), "constraint_violations": len(bad)})
    total = math.fsum(weights)
    if abs(total - 1.0) > 1e-12:
        violations.append(f"weights sum to {total!r}, not 1")
    return EnsembleValidation(not violations, violations, total, math.fsum(nonlocal_w), rows)


def iter_jsonl(path) -> Iterable[dict]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)


def write_transcript(path, transcript: Transcript) -> Path:
    """One JSON object per message: sender, kind, round_id, payload."""
    p = output_path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8") as fh:
        for msg in transcript:
            fh.write(json.dumps(msg.to_dict(), sort_keys=True) + "\n")
    return p


def read_transcript(path) -> list[TranscriptMessage]:
    return [TranscriptMessage.from_dict(d) for d in iter_jsonl(path)]


def write_records(path, table: RoundTable, blocks: Iterable[KeyBlock] = ()) -> Path:
    """Round records then key blocks, each line tagged with ``"record"``."""
    p = output_path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8") as fh:
        for rec in table:
            fh.write(json.dumps({"record": "round", **rec.to_dict()}, sort_keys=True) + "\n")
        for b in blocks:
            fh.write(json.dumps({"record": "key_block", **b.to_dict()}, sort_keys=True) + "\n")
    return p
