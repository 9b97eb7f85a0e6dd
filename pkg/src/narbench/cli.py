"""Command-line interface.

Subcommands map onto the pipeline stages: transform (narratives only), solve
(solutions + back-translations), eval (sandbox + metric summary), analyze,
report, replay (recompute tables from the raw record), and run (all three
pipeline stages). Exit codes: 0 success, 1 usage/config error, 2 finished
with partial failures recorded in the run record.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys


from narbench import analyses
from narbench.orchestrator import ConfigError, Pipeline, RunConfig, call_plan
from narbench.record import OutputDirLocked, RunLock, RunRecord


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the harness contract is exit 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="narbench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="run config JSON file")
        p.add_argument("--benchmark", help="override dataset_path")
        p.add_argument("--strategies", help="comma-separated strategy kinds, overrides config")
        p.add_argument("--k", type=int, action="append", help="pass@k values to report (repeatable)")
        p.add_argument("--dry-run", action="store_true", help="print the call plan, make no backend calls")
        p.add_argument("--resume", action="store_true",
                       help="resume a partial run (the default; flag kept for scripts)")
        p.add_argument("--exact-match", action="store_true", help="disable output normalization")
        p.add_argument("--parallel-exec", type=int, help="sandbox worker count")
        p.add_argument("--max-in-flight", type=int, help="max concurrent backend calls")
        return p

    add("run", "transform + solve + eval")
    add("transform", "generate and parse narratives only")
    add("solve", "sample solutions (and back-translations)")
    add("eval", "execute candidates and write the metric summary")
    analyze = add("analyze", "run discussion analyses over a finished record")
    analyze.add_argument(
        "--analyses",
        default=",".join(analyses.ANALYSIS_NAMES),
        help=f"comma-separated subset of: {', '.join(analyses.ANALYSIS_NAMES)}",
    )
    add("report", "print the tables in output_dir/reports")
    add("replay", "recompute all derived tables from the raw record")
    return parser


def _load_config(args) -> RunConfig:
    config = RunConfig.from_file(args.config)
    overrides = {}
    if args.benchmark:
        overrides["dataset_path"] = args.benchmark
    if args.strategies:
        from narbench.prompts import PromptStrategy, StrategyKind

        overrides["strategies"] = tuple(
            PromptStrategy(kind=StrategyKind(name.strip())) for name in args.strategies.split(",")
        )
    if args.k:
        overrides["report_ks"] = tuple(args.k)
    if args.exact_match:
        overrides["exact_match"] = True
    if args.parallel_exec:
        overrides["parallel_exec"] = args.parallel_exec
    if args.max_in_flight:
        overrides["max_in_flight"] = args.max_in_flight
    return dataclasses.replace(config, **overrides) if overrides else config


def _print_plan(config: RunConfig) -> None:
    from narbench.dataset import apply_filter, load_problems

    problems = apply_filter(load_problems(config.dataset_path, config.source), config.filter)
    plan = call_plan(config, len(problems))
    print(f"dry run: {len(problems)} problems, zero backend calls will be made")
    print(f"  transform calls:       {plan['transforms']}")
    print(f"  solver calls:          {plan['solves']}")
    print(f"  back-translation calls: {plan['backtranslations']}")
    print(f"  total planned calls:   {plan['total']}")


def _exit_code(record: RunRecord) -> int:
    return 2 if any(record.events("stage_error")) else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    try:
        if args.dry_run and args.command in ("run", "transform", "solve", "eval"):
            _print_plan(config)
            return 0

        if args.command == "run":
            pipeline = Pipeline(config)
            pipeline.run()
            return _exit_code(pipeline.record)

        if args.command in ("transform", "solve", "eval"):
            pipeline = Pipeline(config)
            with RunLock(config.output_dir):
                if args.command == "transform":
                    pipeline.stage_transform()
                elif args.command == "solve":
                    pipeline.stage_solve()
                else:
                    pipeline.stage_eval()
            return _exit_code(pipeline.record)

        record = RunRecord.open(config.output_dir)
        if args.command == "analyze":
            names = [n.strip() for n in args.analyses.split(",") if n.strip()]
            written = analyses.run_analysis(record, config, names)
            for name, path in written.items():
                print(f"{name}: {path}")
            return _exit_code(record)

        if args.command == "replay":
            for path in analyses.replay(record, config):
                print(path)
            return 0

        if args.command == "report":
            reports = sorted(analyses.reports_dir(config).glob("*.tsv"))
            if not reports:
                print("no reports yet; run eval/analyze first", file=sys.stderr)
                return 1
            for path in reports:
                print(f"== {path.name}")
                print(path.read_text(encoding="utf-8"))
            return 0
    except OutputDirLocked as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return 1
    except analyses.AnalysisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 1


if __name__ == "__main__":
    sys.exit(main())
