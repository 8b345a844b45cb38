"""Command line entry point: ``nesr run | report | eval | gen-data | defaults``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import RunConfig, parse_pairs
from .experiment import (evaluate_checkpoint, execute_experiment, read_csv, rebuild_report,
                         write_problem_csvs, write_report)
from .problems.benchmarks import PROBLEMS, generate_problem

log = logging.getLogger("nesr")


def _overrides(pairs):
    text = "\n".join(pairs)
    return parse_pairs(text)


def cmd_run(args) -> int:
    overrides = _overrides(args.set)
    if args.config:
        config = RunConfig.from_file(args.config, **overrides)
    else:
        config = RunConfig.from_mapping(overrides)
    out = Path(args.output_dir or config.output_dir)
    log.info("running %d run(s) of %s into %s", config.runs, config.problem, out)
    report = execute_experiment(config, out, jobs=args.jobs)
    sys.stdout.write(report.to_table())
    failed = [r for r in report.runs if not r.ok]
    for r in failed:
        log.error("run %d failed:\n%s", r.run, r.error)
    return 1 if failed else 0


def cmd_report(args) -> int:
    report = rebuild_report(args.directory)
    if not args.dry_run:
        write_report(report, args.directory)
    sys.stdout.write(report.to_table())
    return 0 if report.ok else 1


def cmd_eval(args) -> int:
    X = y = None
    if args.data:
        header, table = read_csv(args.data)
        if header and header[-1] == "y":
            X, y = table[:, :-1], table[:, -1]
        else:
            X = table
    result = evaluate_checkpoint(args.checkpoint, X, y)
    preds = result.pop("predictions", None)
    if args.json:
        sys.stdout.write(json.dumps(result, indent=1) + "\n")
    else:
        for key, value in result.items():
            sys.stdout.write(f"{key}: {value}\n")
    if preds is not None and args.predictions:
        Path(args.predictions).write_text("".join(f"{v!r}\n" for v in preds))
    return 0


def cmd_gen_data(args) -> int:
    problem = generate_problem(args.problem, args.seed, args.constraint_samples)
    out = write_problem_csvs(problem, args.output)
    log.info("wrote %s data to %s", args.problem, out)
    return 0


def cmd_defaults(args) -> int:
    sys.stdout.write(RunConfig().to_text())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nesr", description="Neuro-evolutionary symbolic regression.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="execute an experiment")
    r.add_argument("config", nargs="?", help="key = value configuration file")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration key (repeatable)")
    r.add_argument("--output-dir", help="overrides output_dir from the configuration")
    r.add_argument("--jobs", type=int, default=1, help="runs executed in parallel")
    r.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="rebuild a report from checkpoints")
    rep.add_argument("directory")
    rep.add_argument("--dry-run", action="store_true", help="print without rewriting report files")
    rep.set_defaults(func=cmd_report)

    e = sub.add_parser("eval", help="print a checkpointed model's expression and metrics")
    e.add_argument("checkpoint")
    e.add_argument("--data", help="CSV of inputs (optionally a final 'y' column)")
    e.add_argument("--predictions", help="write predictions on --data to this file")
    e.add_argument("--json", action="store_true")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gen-data", help="write benchmark datasets as CSV")
    g.add_argument("problem", choices=PROBLEMS)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--constraint-samples", type=int, default=50)
    g.add_argument("--output", default="data")
    g.set_defaults(func=cmd_gen_data)

    d = sub.add_parser("defaults", help="print the default configuration")
    d.set_defaults(func=cmd_defaults)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (KeyError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
