"""Command-line entry point: ``irs-ce run|limits|search-p2|check``.

Exit codes: 0 on success, 1 when a check or the invariant suite reports a
failure, 2 on invalid configuration or infeasible designs.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, IrsOfdmaError
from .harness import (
    check_designs,
    format_csv,
    parse_config,
    run_experiment,
    run_invariant_suite,
    run_p2_search,
)
from .training import k1_max, k2_max

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INVALID = 0, 1, 2


def _load(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from None
    return parse_config(text)


def _cmd_run(args) -> int:
    spec = _load(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.trials is not None:
        if args.trials < 1:
            raise ConfigError("must be at least 1", "trials")
        changes["trials"] = args.trials
    spec = replace(spec, **changes)
    if spec.experiment == "invariant_suite":
        results = run_invariant_suite(spec)
        for r in results:
            print(r.line())
        return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED
    if spec.experiment == "p2_search":
        return _print_search(spec, args.top)
    progress = (lambda msg: print(msg, file=sys.stderr)) if args.verbose else None
    reports = run_experiment(spec, threads=args.threads, progress=progress)
    for r in reports:
        if r.diagnostic:
            print(f"aborted {r.scheme} {r.allocation}:{r.pattern} K={r.K} "
                  f"snr_db={r.snr_db}: {r.diagnostic}", file=sys.stderr)
    text = format_csv(reports)
    out = args.out or spec.output
    if out:
        try:
            Path(out).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot write {out}: {exc.strerror or exc}", "output") from None
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _print_search(spec, top: int) -> int:
    result, heuristic = run_p2_search(spec)
    ranking = result.ranking
    print(f"{len(ranking)} feasible allocations, {spec.p2_samples} reference-channel draws")
    for i, entry in enumerate(ranking[:top]):
        print(f"rank {i}: objective {entry.objective.value:.6g}")
        print(entry.allocation.to_grid())
    pos = result.rank_of(heuristic)
    best = result.best.objective.value
    value = ranking[pos].objective.value
    print(f"two-step heuristic: rank {pos}, objective {value:.6g}, "
          f"ratio to optimum {value / best:.6f}")
    return EXIT_OK


def _cmd_limits(args) -> int:
    print(f"K1={k1_max(args.N, args.L)}")
    print(f"K2={k2_max(args.N, args.M, args.L)}")
    return EXIT_OK


def _cmd_search(args) -> int:
    spec = _load(args.config)
    return _print_search(spec, args.top)


def _cmd_check(args) -> int:
    spec = _load(args.config)
    results = check_designs(spec)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irs-ce", description="Pilot-design and channel-estimation experiments for IRS-aided OFDMA."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("config")
    run.add_argument("--out", help="CSV output path (default: config 'output', else stdout)")
    run.add_argument("--seed", type=int, help="override the master seed")
    run.add_argument("--trials", type=int, help="override the trial count")
    run.add_argument("--threads", type=int, default=1, help="worker threads for trials")
    run.add_argument("--top", type=int, default=5, help="ranked allocations to print (p2_search)")
    run.add_argument("-v", "--verbose", action="store_true", help="report progress on stderr")
    run.set_defaults(func=_cmd_run)

    limits = sub.add_parser("limits", help="print the user capacities K1 and K2")
    limits.add_argument("--N", type=int, required=True)
    limits.add_argument("--M", type=int, required=True)
    limits.add_argument("--L", type=int, required=True)
    limits.set_defaults(func=_cmd_limits)

    search = sub.add_parser("search-p2", help="exhaustive pilot-allocation search")
    search.add_argument("config")
    search.add_argument("--top", type=int, default=5, help="ranked allocations to print")
    search.set_defaults(func=_cmd_search)

    check = sub.add_parser("check", help="feasibility report of the configured designs")
    check.add_argument("config")
    check.set_defaults(func=_cmd_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except (IrsOfdmaError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
