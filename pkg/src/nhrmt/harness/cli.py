"""Command line entry point: ``nhrmt <experiment> [flags]``."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from ..errors import ConfigError
from . import run_experiment, summary_table
from .config import EXPERIMENTS, load_config, make_config

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _profile_arg(text):
    text = text.strip()
    if text.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise argparse.ArgumentTypeError(f"bad profile JSON: {exc}") from exc
    return {"kind": text}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nhrmt",
        description="Random-matrix kernel, MDE and dynamics experiments.")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", help="JSON config; flags override its fields")
        sp.add_argument("--n", type=int)
        sp.add_argument("--samples", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--g", type=float)
        sp.add_argument("--zeta1", help="complex, e.g. 1.5 or 1.2+0.4j")
        sp.add_argument("--zeta2", help="complex, e.g. 1.5 or 1.2+0.4j")
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--profile", type=_profile_arg,
                        help="kind name or JSON object such as "
                             "'{\"kind\": \"two-block\", \"within\": 2, \"across\": 0.5}'")
        sp.add_argument("--law")
        sp.add_argument("--out-dir", dest="out_dir")
        sp.add_argument("--workers", type=int)
        if name == "accept-all":
            sp.add_argument("--criteria", help="comma-separated criterion ids to run")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fields = {k: v for k, v in vars(args).items()
              if k not in ("config", "criteria") and v is not None}
    try:
        if args.config:
            cfg = load_config(args.config, fields)
        else:
            cfg = make_config(fields)
        only = None
        if getattr(args, "criteria", None):
            try:
                only = [int(c) for c in args.criteria.split(",")]
            except ValueError as exc:
                raise ConfigError(f"bad --criteria {args.criteria!r}") from exc
            if not set(only) <= set(range(1, 11)):
                raise ConfigError("criterion ids run from 1 to 10")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        report = run_experiment(cfg, criteria=only)
    except (np.linalg.LinAlgError, ArithmeticError, ValueError, RuntimeError) as exc:
        # failures outside per-sample work, e.g. in the deterministic prediction
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if report.criteria:
        print(summary_table(report))
    else:
        verdict = {True: "PASS", False: "FAIL", None: "n/a"}[report.passed]
        print(f"{cfg.experiment}: {verdict}  flagged samples: {report.flagged}")
        print(json.dumps({"predicted": report.to_dict()["predicted"],
                          "aggregate": report.to_dict()["aggregate"],
                          "details": report.to_dict()["details"]}, indent=2, sort_keys=True))
    if cfg.out_dir:
        print(f"wrote {cfg.out_dir}/report.json")
    return EXIT_FAIL if report.passed is False else EXIT_PASS


if __name__ == "__main__":
    sys.exit(main())
