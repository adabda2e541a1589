"""Command-line entry point.

    monoqkd run [options]                 run the protocol, write a JSON report
    monoqkd validate-ensemble PATH        check a serialized ensemble
    monoqkd export-ensemble NAME PATH     write a built-in ensemble

``run`` exits 0 when every repetition completed, 1 when any repetition was
aborted by the protocol, and 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from . import io
from .hv_adversary import critical_ensemble, local_only_ensemble
from .protocol.engine import EnsembleSource, IdealSource, ProtocolConfig, RunStatus, run_protocol
from .protocol.parties import InsufficientBits
from .protocol.engine import InsufficientData
from .rng import RngStreams
from .security import analyze

log = logging.getLogger("monoqkd")

EXIT_COMPLETED = 0
EXIT_ABORTED = 1
EXIT_CONFIG_ERROR = 2

ADVERSARIES = ("none", "local_only", "critical", "custom")
BUILTIN_ENSEMBLES = {"critical": critical_ensemble, "local_only": local_only_ensemble}
CONFIG_FIELDS = tuple(f.name for f in fields(ProtocolConfig))


class ConfigError(ValueError):
    pass


@dataclass
class RunSpec:
    config: ProtocolConfig
    adversary: str = "none"
    ensemble: str | None = None
    report: str = "report.json"
    transcript: str | None = None
    records: str | None = None
    repetitions: int = 1

    def __post_init__(self):
        if self.adversary not in ADVERSARIES:
            raise ConfigError(f"adversary must be one of {ADVERSARIES}, got {self.adversary!r}")
        if self.adversary == "custom" and not self.ensemble:
            raise ConfigError("adversary 'custom' needs an ensemble path")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be at least 1")

    def to_dict(self):
        return {
            **self.config.to_dict(),
            "adversary": self.adversary,
            "ensemble": self.ensemble,
            "repetitions": self.repetitions,
        }

    def source(self):
        if self.adversary == "none":
            return IdealSource()
        if self.adversary == "custom":
            try:
                return EnsembleSource(io.load_ensemble(self.ensemble))
            except (OSError, io.FormatError) as exc:
                raise ConfigError(f"cannot load ensemble {self.ensemble}: {exc}") from exc
        return EnsembleSource(BUILTIN_ENSEMBLES[self.adversary]())


def _clean(obj):
    """Replace NaN with None so reports stay strict JSON."""
    if isinstance(obj, float) and math.isnan(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_clean(v) for v in obj]
    return obj


def run(spec: RunSpec):
    """Run every repetition; returns (report document, exit status)."""
    source = spec.source()
    reps = []
    first = None
    for i in range(spec.repetitions):
        rngs = RngStreams(spec.config.seed, repetition=i)
        result = run_protocol(spec.config, source, rngs)
        entry = {
            "repetition": i,
            "status": result.status.value,
            "estimation": result.estimation.to_dict(),
        }
        if not result.aborted:
            entry["keys_agree"] = result.keys_agree()
            entry["n_key_blocks"] = len(result.alice_blocks)
            entry["security"] = analyze(result, rngs.eve_guess).to_dict()
        reps.append(entry)
        if first is None:
            first = result
        log.info("repetition %d: %s, CHSH %.5f", i, result.status.value, result.estimation.chsh_estimate)

    n_aborted = sum(r["status"] == RunStatus.ABORTED.value for r in reps)
    status = RunStatus.ABORTED if n_aborted else RunStatus.COMPLETED
    doc = {
        "format": io.REPORT_FORMAT,
        "version": io.FORMAT_VERSION,
        "status": status.value,
        "seed": spec.config.seed,
        "config": spec.to_dict(),
        "summary": {"completed": len(reps) - n_aborted, "aborted": n_aborted},
        "repetitions": reps,
    }
    if spec.transcript:
        io.write_transcript(spec.transcript, first.transcript)
    if spec.records:
        io.write_records(spec.records, first.table, first.alice_blocks)
    io.write_json(spec.report, _clean(doc))
    return doc, EXIT_ABORTED if n_aborted else EXIT_COMPLETED


def _spec_from_args(args) -> RunSpec:
    values = {}
    if args.config:
        try:
            doc = io.read_json(args.config)
        except (OSError, io.FormatError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        doc = dict(doc)
        fmt = doc.pop("format", io.CONFIG_FORMAT)
        doc.pop("version", None)
        if fmt != io.CONFIG_FORMAT:
            raise ConfigError(f"config format must be {io.CONFIG_FORMAT!r}, got {fmt!r}")
        values.update(doc)
    for name in (*CONFIG_FIELDS, "adversary", "ensemble", "report", "transcript", "records", "repetitions"):
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    unknown = set(values) - set(CONFIG_FIELDS) - {"adversary", "ensemble", "report", "transcript", "records",
                                                 "repetitions"}
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    try:
        config = ProtocolConfig(**{k: values.pop(k) for k in CONFIG_FIELDS if k in values})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return RunSpec(config, **values)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="monoqkd", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the protocol and write a report")
    p.add_argument("--config", help="JSON config file; flags override its fields")
    p.add_argument("--n-rounds", dest="n_rounds", type=int)
    p.add_argument("--test-fraction", dest="test_fraction", type=float)
    p.add_argument("-K", "--block-size", dest="K", type=int)
    p.add_argument("--chsh-tolerance", dest="chsh_tolerance", type=float)
    p.add_argument("--correlation-tolerance", dest="correlation_tolerance", type=float)
    p.add_argument("--min-cell-samples", dest="min_cell_samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--adversary", choices=ADVERSARIES)
    p.add_argument("--ensemble", help="serialized ensemble for --adversary custom")
    p.add_argument("--report", help="report path (default report.json)")
    p.add_argument("--transcript", help="JSON Lines transcript of the first repetition")
    p.add_argument("--records", help="JSON Lines round records and key blocks of the first repetition")
    p.add_argument("--repetitions", type=int)

    v = sub.add_parser("validate-ensemble", help="check a serialized ensemble")
    v.add_argument("path")

    e = sub.add_parser("export-ensemble", help="write a built-in ensemble")
    e.add_argument("name", choices=sorted(BUILTIN_ENSEMBLES))
    e.add_argument("path")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "validate-ensemble":
        try:
            result = io.validate_ensemble(args.path)
        except (OSError, io.FormatError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG_ERROR
        sys.stdout.write(io.dumps(result.to_dict()))
        return 0 if result.ok else 1

    if args.command == "export-ensemble":
        path = io.save_ensemble(args.path, BUILTIN_ENSEMBLES[args.name]())
        print(path)
        return 0

    try:
        spec = _spec_from_args(args)
        doc, status = run(spec)
    except (ConfigError, InsufficientData, InsufficientBits) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    for rep in doc["repetitions"]:
        sec = rep.get("security", {})
        print("\t".join(str(x) for x in (
            rep["repetition"], rep["status"], f"{rep['estimation']['chsh_estimate']:.6f}",
            rep.get("n_key_blocks", 0), sec.get("p_empirical", "-"),
            sec.get("key_blocks", {}).get("P_empirical", "-"),
        )))
    print(f"status\t{doc['status']}\treport\t{io.output_path(spec.report)}")
    return status


if __name__ == "__main__":
    sys.exit(main())
