"""Command-line front end: run, list and validate scenarios."""

from __future__ import annotations

import argparse
import sys

from .config import builtin_names, load_scenario, validate_scenario
from .errors import ConfigError, SemiSwitchError
from .experiments import run_scenario


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="semiswitch",
                                description="Switched systems with semi-Markov switching.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario file or builtin")
    r.add_argument("scenario", help="path to a YAML scenario or a builtin name")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--t-end", type=float, default=None)
    r.add_argument("--replicas", type=_positive_int, default=None)
    r.add_argument("--out", default="out")
    r.add_argument("--threads", type=_positive_int, default=1)
    r.add_argument("--format", choices=("csv", "json"), default="csv")
    r.add_argument("--only", action="append", help="run only this experiment kind (repeatable)")

    sub.add_parser("list", help="list builtin scenarios")

    v = sub.add_parser("validate", help="check a scenario without running it")
    v.add_argument("scenario")
    return p


def cmd_list() -> int:
    rows = []
    for name in builtin_names():
        sc = load_scenario(name)
        rows.append((name, sc.anchor))
    width = max(len(n) for n, _ in rows)
    for name, anchor in rows:
        print(f"{name:<{width}}  {anchor}")
    return 0


def cmd_validate(ref: str) -> int:
    sc = load_scenario(ref)
    problems = validate_scenario(sc)
    if problems:
        for msg in problems:
            print(f"{sc.name}: {msg}", file=sys.stderr)
        return 1
    print(f"{sc.name}: ok ({sc.system.n_states} states, dim {sc.system.dim}, "
          f"{len(sc.experiments)} experiments)")
    return 0


def cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    problems = validate_scenario(sc)
    if problems:
        for msg in problems:
            print(f"{sc.name}: {msg}", file=sys.stderr)
        return 1
    report = run_scenario(sc, args.out, seed=args.seed, t_end=args.t_end, replicas=args.replicas,
                          threads=args.threads, fmt=args.format, only=args.only)
    failed = False
    for e in report["experiments"]:
        status = {True: "pass", False: "FAIL", None: "done"}[e.get("pass")]
        failed |= e.get("pass") is False
        extra = f"  {e['error']}" if "error" in e else ""
        print(f"{e['kind']:<20} {status}{extra}")
    print(f"wrote {', '.join(report['files'])} to {args.out}")
    return 2 if failed else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list":
            return cmd_list()
        if args.command == "validate":
            return cmd_validate(args.scenario)
        return cmd_run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except SemiSwitchError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
