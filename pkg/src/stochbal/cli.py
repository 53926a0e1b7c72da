"""``sbl``: run, validate and re-check experiments.

Exit codes: 0 all checks pass, 1 some check fails, 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .experiments import (ConfigError, ExperimentConfig, default_suite, reevaluate, result_dirs,
                          run_experiment)
from .model import ModelError


def _print_record(rec, verbose: bool) -> None:
    print(f"{rec.name}: {'PASS' if rec.passed else 'FAIL'} ({rec.wall_time:.1f} s)")
    for f in rec.fits:
        print(f"  fit {f.name}: slope {f.slope:.4f}, r^2 {f.r_squared:.4f}")
    for c in rec.checks:
        if verbose or not c.passed:
            print(f"  [{'ok' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
    for n in rec.notes:
        print(f"  note: {n}")


def _load(path, args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(path)
    if getattr(args, "paths", None):
        cfg.paths = args.paths
    if getattr(args, "jobs", None):
        cfg.options["n_jobs"] = args.jobs
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args.config, args)
    rec = run_experiment(cfg, args.output or cfg.output)
    _print_record(rec, args.verbose)
    return 0 if rec.passed else 1


def cmd_validate(args) -> int:
    cfg = _load(args.config, args)
    warnings = cfg.validate()
    print(f"{args.config}: valid {cfg.experiment} config (digest {cfg.digest()})")
    for w in warnings:
        print(f"  warning: {w}")
    return 0


def cmd_suite(args) -> int:
    failed = False
    for crit, d in default_suite():
        if args.only and d["name"] not in args.only:
            continue
        cfg = ExperimentConfig.from_dict(d)
        if args.jobs:
            cfg.options["n_jobs"] = args.jobs
        rec = run_experiment(cfg, f"{args.output}/{cfg.name}")
        tag = ",".join(str(c) for c in crit)
        print(f"criterion {tag}: ", end="")
        _print_record(rec, args.verbose)
        failed |= not rec.passed
    return 1 if failed else 0


def cmd_report(args) -> int:
    dirs = result_dirs(args.results)
    if not dirs:
        print(f"no results under {args.results}", file=sys.stderr)
        return 2
    bad = False
    for d in dirs:
        passed, agrees, checks = reevaluate(d)
        flag = "" if agrees else "  (differs from the saved verdict)"
        print(f"{d.name}: {'PASS' if passed else 'FAIL'}{flag}")
        for c in checks:
            if args.verbose or not c.passed:
                print(f"  [{'ok' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
        bad |= not (passed and agrees)
    return 1 if bad else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sbl", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="print every check")
    ap.add_argument("--log-level", default="WARNING")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment from a JSON config")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="results directory (overrides the config)")
    p.add_argument("--paths", type=int, help="override mc.paths")
    p.add_argument("-j", "--jobs", type=int, help="parallel workers")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="check a config without running it")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("suite", help="run the default acceptance suite")
    p.add_argument("-o", "--output", default="results")
    p.add_argument("--only", nargs="+", help="experiment names to run")
    p.add_argument("-j", "--jobs", type=int)
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("report", help="re-evaluate verdicts from saved CSV tables")
    p.add_argument("results")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ModelError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
