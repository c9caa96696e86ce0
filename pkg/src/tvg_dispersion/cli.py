"""Command line runner: ``tvg-disperse run|sweep|verify``.

Exit codes: 0 balanced outcome, 1 terminated but unbalanced, 2 timeout,
3 invalid scenario or failed precondition, 4 adversary class violation
(for ``verify``: any round failing its declared class).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .engine import EngineError
from .scenario import (
    ScenarioError,
    emit_summary_csv,
    parse_scenario,
    run_experiment,
    summary_json,
    verify_schedule,
)

EXIT_OK = 0
EXIT_UNBALANCED = 1
EXIT_TIMEOUT = 2
EXIT_INVALID = 3
EXIT_CLASS_VIOLATION = 4

OUTCOME_EXIT = {
    "balanced": EXIT_OK,
    "terminated_balanced": EXIT_OK,
    "terminated_unbalanced": EXIT_UNBALANCED,
    "timeout": EXIT_TIMEOUT,
    "adversary_class_violation": EXIT_CLASS_VIOLATION,
}


def _load(path: str, seed: int | None, max_rounds: int | None):
    data = json.loads(Path(path).read_text())
    if seed is not None:
        data["seed"] = seed
    if max_rounds is not None:
        data["max_rounds"] = max_rounds
    return parse_scenario(data)


def _worst(codes: list[int]) -> int:
    # order of severity: invalid, class violation, timeout, unbalanced, ok
    for code in (EXIT_INVALID, EXIT_CLASS_VIOLATION, EXIT_TIMEOUT, EXIT_UNBALANCED):
        if code in codes:
            return code
    return EXIT_OK


def cmd_run(args) -> int:
    sc = _load(args.file, args.seed, args.max_rounds)
    if args.out:
        with open(args.out, "w") as sink:
            _, summary = run_experiment(sc, keep_records=False, trace_sink=sink)
    else:
        _, summary = run_experiment(sc, keep_records=False)
    print(summary_json(summary))
    return OUTCOME_EXIT[summary.outcome]


def cmd_sweep(args) -> int:
    files = sorted(Path(args.dir).glob("*.json"))
    summaries = []
    codes = []
    for path in files:
        try:
            sc = _load(str(path), args.seed, args.max_rounds)
            _, s = run_experiment(sc, keep_records=False)
        except ScenarioError as exc:
            print(f"{path.name}: invalid scenario: {exc}", file=sys.stderr)
            codes.append(EXIT_INVALID)
            continue
        summaries.append(s)
        codes.append(OUTCOME_EXIT[s.outcome])
        print(f"{path.name}: {s.outcome} after {s.rounds} rounds", file=sys.stderr)
    if args.out:
        with open(args.out, "w", newline="") as sink:
            emit_summary_csv(summaries, sink)
    else:
        emit_summary_csv(summaries, sys.stdout)
    return _worst(codes)


def cmd_verify(args) -> int:
    sc = _load(args.file, args.seed, None)
    report = verify_schedule(sc, args.rounds, horizon=args.horizon)
    text = json.dumps(report.to_dict(), sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK if report.ok else EXIT_CLASS_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tvg-disperse", description="Run and check dispersion scenarios.")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario and print its summary")
    run.add_argument("file")
    run.add_argument("--out", help="write the JSON-lines trace here")
    run.add_argument("--seed", type=int)
    run.add_argument("--max-rounds", type=int)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run every *.json scenario in a directory, emit CSV")
    sweep.add_argument("dir")
    sweep.add_argument("--out", help="CSV destination (default stdout)")
    sweep.add_argument("--seed", type=int)
    sweep.add_argument("--max-rounds", type=int)
    sweep.set_defaults(func=cmd_sweep)

    verify = sub.add_parser("verify", help="check a schedule prefix against its declared class")
    verify.add_argument("file")
    verify.add_argument("--rounds", type=int, default=50)
    verify.add_argument("--horizon", type=int, default=3)
    verify.add_argument("--out")
    verify.add_argument("--seed", type=int)
    verify.set_defaults(func=cmd_verify)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, json.JSONDecodeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
