"""Command-line experiment harness.

Exit codes: 0 success, 2 bound or assertion failure, 3 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from ..errors import ParameterError, QlsimError
from .compare import compare_costs, run_compare
from .config import BACKENDS, COMMANDS, LAWS, ConfigError, ExperimentConfig
from .instances import band_instance, fraction_instance, generate_instance, instance_seeds
from .suites import (
    SuiteOutcome,
    run_apps,
    run_bounds,
    run_estimate_norm,
    run_grover_lb,
    run_solve,
    run_solve_precond,
)

EXIT_OK = 0
EXIT_FAILURE = 2
EXIT_CONFIG = 3
OUT_ENV = "QLSIM_OUT"

RUNNERS = {
    "solve": run_solve,
    "solve-precond": run_solve_precond,
    "estimate-norm": run_estimate_norm,
    "bounds": run_bounds,
    "apps": run_apps,
    "grover-lb": run_grover_lb,
    "compare": run_compare,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="qlsim", description="Quantum linear-system simulation harness")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, help="experiment configuration JSON")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output directory (overrides the environment)")
    parser.add_argument("--workers", type=int)
    parser.add_argument("--backend", choices=BACKENDS)
    parser.add_argument("--eps", type=float)
    parser.add_argument("--count", type=int, help="number of seeded instances")
    parser.add_argument("--law", choices=LAWS)
    parser.add_argument("--dimension", type=int)
    parser.add_argument("--kappa", type=float)
    parser.add_argument("--estimate-factor", type=float, help="multiplier on the exact norm estimate")
    return parser


def load_config(args):
    """Merge the config file, command-line overrides and the output environment variable."""
    cfg = ExperimentConfig()
    if args.config is not None:
        try:
            cfg = ExperimentConfig.loads(args.config.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read configuration: {exc}") from exc
    out = args.out or os.environ.get(OUT_ENV)
    return cfg.with_overrides(**{
        "command": args.command,
        "workers": args.workers,
        "instance.seed": args.seed,
        "instance.count": args.count,
        "instance.law": args.law,
        "instance.dimension": args.dimension,
        "instance.kappa": args.kappa,
        "params.eps": args.eps,
        "params.backend": args.backend,
        "params.estimate_factor": args.estimate_factor,
        "output.out_dir": out,
    })


def run_suite(cfg: ExperimentConfig) -> SuiteOutcome:
    return RUNNERS[cfg.command](cfg)


def write_outputs(cfg: ExperimentConfig, outcome: SuiteOutcome):
    """Write `<command>-<hash>.json` and `.csv`; every CSV row carries the hash and seed."""
    digest = cfg.digest()
    out_dir = Path(cfg.output.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = out_dir / f"{cfg.command}-{digest}"
    report = {
        "command": cfg.command,
        "config_hash": digest,
        "config": cfg.to_json(),
        "passed": outcome.ok,
        "report": outcome.report,
    }
    json_path = stem.with_suffix(".json")
    json_path.write_text(json.dumps(report, indent=2, default=_jsonable) + "\n")
    rows = [{"config_hash": digest, "seed": cfg.instance.seed, **row} for row in outcome.rows]
    fields = list(dict.fromkeys(key for row in rows for key in row))
    csv_path = stem.with_suffix(".csv")
    with csv_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, restval="")
        writer.writeheader()
        writer.writerows(rows)
    return json_path, csv_path


def _jsonable(obj):
    if hasattr(obj, "to_json"):
        return obj.to_json()
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = load_config(args)
        outcome = run_suite(cfg)
        json_path, csv_path = write_outputs(cfg, outcome)
    except (ConfigError, ParameterError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QlsimError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    status = "passed" if outcome.ok else "FAILED"
    print(f"{cfg.command}: {status} ({len(outcome.rows)} rows) -> {json_path}, {csv_path}")
    return EXIT_OK if outcome.ok else EXIT_FAILURE


__all__ = [
    "EXIT_CONFIG",
    "EXIT_FAILURE",
    "EXIT_OK",
    "ExperimentConfig",
    "ConfigError",
    "band_instance",
    "build_parser",
    "compare_costs",
    "fraction_instance",
    "generate_instance",
    "instance_seeds",
    "load_config",
    "main",
    "run_suite",
    "write_outputs",
]
