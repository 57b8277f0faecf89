"""Command-line front end.

Exit statuses: 0 success, 2 configuration or missing-artifact error,
3 numerical failure (blow-up or tail fit), 4 a verification check failed,
5 a requested bound check needs a longer horizon than was simulated.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import pydantic

from .dynamics import BlowUpError
from .expansion import TailFitError
from .pipeline import (
    STAGES,
    ArtifactMissingError,
    RunConfig,
    load_config,
    run_pipeline,
    stage_extract,
    stage_probe,
    stage_report,
    stage_simulate,
    stage_verify,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_VERIFY = 4
EXIT_UNVERIFIABLE = 5


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nsexpand", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("simulate", "probe", "extract", "verify", "report", "run"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run configuration (JSON)")
        p.add_argument("--out", help="output directory, overrides output_dir")
        p.add_argument("--seed-override", type=int, help="replace every seed in the configuration")
        if name == "run":
            p.add_argument("--stage", choices=STAGES, default="simulate", help="first stage to execute")
    return ap


def _outcome(report_data: dict) -> int:
    if report_data["status"] != "pass":
        return EXIT_VERIFY
    if report_data["unverifiable"]:
        return EXIT_UNVERIFIABLE
    return EXIT_OK


def _print_summary(data: dict) -> None:
    for term in data["terms"]:
        print(f"q_{term['n']}: degree {term['degree']}, shells {term['support']}, |xi| {term['xi_norm']:.6e}")
    for name, ok in sorted(data["checks"].items()):
        print(f"check {name}: {'pass' if ok else 'FAIL'}")
    for lemma in data["lemmas"]:
        print(f"bound {lemma['lemma']}: {lemma['status']}")
    print(f"status: {data['status']}")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg: RunConfig = load_config(args.config).with_overrides(args.out, args.seed_override)
    except (OSError, ValueError, pydantic.ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.output_dir)
    try:
        if args.command == "run":
            return _finish(run_pipeline(cfg, start=args.stage).data)
        if args.command == "simulate":
            traj = stage_simulate(cfg, out)
            print(f"stored {len(traj)} snapshots in {out}")
        elif args.command == "probe":
            rec = stage_probe(cfg, out)
            print(f"K_emp = {rec['K_emp']!r}")
        elif args.command == "extract":
            state = stage_extract(cfg, out)
            print(f"extracted {state.depth} terms into {out}")
        elif args.command == "verify":
            rec = stage_verify(cfg, out)
            print(json.dumps(rec["checks"], sort_keys=True))
            if not all(rec["checks"].values()):
                return EXIT_VERIFY
            return EXIT_UNVERIFIABLE if rec["unverifiable"] else EXIT_OK
        elif args.command == "report":
            return _finish(stage_report(cfg, out).data)
    except ArtifactMissingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BlowUpError as exc:
        print(f"numerical failure: integration blew up: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except TailFitError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _finish(data: dict) -> int:
    _print_summary(data)
    code = _outcome(data)
    if code == EXIT_UNVERIFIABLE:
        print(f"unverifiable on this horizon: {', '.join(data['unverifiable'])}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
