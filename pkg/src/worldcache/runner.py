"""Command-line entry point.

Usage examples:
- worldcache run --policy worldcache --scenario static --out out/static
- worldcache run --scenario curved --sweep tau0=0.02:0.2:10
- worldcache compare --scenario rising-drift --ablate cfc,swd,ofa,ats --replay
- worldcache trace record --scenario rising-drift --trace out/rising.wctr
- worldcache trace replay --trace out/rising.wctr --sweep tau0=0.01:0.2:20

Any configuration key can be overridden as ``--section.key=value`` or
``--set section.key=value``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from .config import CliConfig, load_config
from .controllers import POLICY_NAMES
from .errors import ConfigError, WorldCacheError
from .replay import record_trace
from .sim import ScenarioKind
from .sweep import ablation_rows, compare_policies, parse_sweep, replay_policy, run_policy, run_sweep
from .telemetry import format_rows, format_summary, write_report, write_rows_csv, write_rows_json, write_steps_csv
from .trace_format import read_trace

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
TRACE_FILE = "trace.wctr"


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, default=None, help="TOML file with [policy] [flow] [scenario] [run] tables")
    parser.add_argument("--policy", choices=[*POLICY_NAMES, "fixed-threshold"], default="worldcache")
    parser.add_argument("--scenario", choices=[k.value for k in ScenarioKind], default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", type=str, default=None, help="Output directory (run.out_dir)")
    parser.add_argument("--sweep", type=str, default=None, help="key=start:stop:count or key=a,b,c")
    parser.add_argument("--trace", type=str, default=None, help="WCTR trace path")
    parser.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="Override a config key")
    parser.add_argument("--quiet", action="store_true", help="Only log warnings and errors to stderr")
    parser.add_argument("--verbose", action="store_true", help="Log every step decision to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="worldcache", description="WorldCache caching simulator and telemetry CLI")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run one policy on a scenario (or a sweep)")
    _add_common(run)

    compare = sub.add_parser("compare", help="Compare policies or incremental module ablations")
    _add_common(compare)
    compare.add_argument("--ablate", type=str, default=None, help="Comma list from cfc,swd,ofa,ats")
    compare.add_argument("--replay", action="store_true", help="Evaluate rows on a recorded full-compute trace")

    trace = sub.add_parser("trace", help="Record or replay a WCTR trace")
    trace.add_argument("action", choices=["record", "replay"])
    _add_common(trace)
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> Tuple[argparse.Namespace, List[str]]:
    parser = build_parser()
    args, extras = parser.parse_known_args(list(argv) if argv is not None else None)
    overrides: List[str] = []
    for token in extras:
        head = token[2:].split("=", 1)[0] if token.startswith("--") else ""
        if "=" not in token or "." not in head:
            parser.error(f"unrecognized arguments: {token}")
        overrides.append(token[2:])
    overrides.extend(args.set)
    return args, overrides


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.WARNING if args.quiet else logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s", force=True)


def _load(args: argparse.Namespace, overrides: List[str]) -> CliConfig:
    flags: List[str] = []
    if args.scenario is not None:
        flags.append(f"scenario.kind={args.scenario}")
    if args.seed is not None:
        flags.append(f"scenario.seed={args.seed}")
    if args.out is not None:
        flags.append(f"run.out_dir={args.out}")
    return load_config(args.config, [*flags, *overrides])


def _config_document(args: argparse.Namespace, config: CliConfig) -> dict:
    document = config.to_dict()
    document["cli"] = {"command": args.command, "policy": args.policy}
    return document


def cmd_run(args: argparse.Namespace, config: CliConfig) -> int:
    out = Path(config.run.out_dir)
    if args.sweep:
        key, values = parse_sweep(args.sweep)
        rows = run_sweep(config, key, values, policy=args.policy)
        write_rows_csv(out / "sweep.csv", rows)
        write_rows_json(out / "report.json", rows, _config_document(args, config))
        for line in format_rows(rows):
            print(line)
        print(f"wrote {out / 'sweep.csv'}")
        return EXIT_OK

    report = run_policy(config, args.policy)
    write_report(out / "report.json", report, _config_document(args, config))
    write_steps_csv(out / "steps.csv", report)
    print(format_summary(report))
    print(f"wrote {out / 'report.json'}")
    return EXIT_OK


def _trace_path(args: argparse.Namespace, config: CliConfig) -> Path:
    return Path(args.trace) if args.trace else Path(config.run.out_dir) / TRACE_FILE


def cmd_compare(args: argparse.Namespace, config: CliConfig) -> int:
    trace = None
    if args.replay:
        trace = read_trace(args.trace) if args.trace else record_trace(config.scenario)
    if args.ablate:
        modules = [m.strip() for m in args.ablate.split(",") if m.strip()]
        rows = ablation_rows(config, modules, trace)
    else:
        rows = compare_policies(config, trace=trace)
    out = Path(config.run.out_dir)
    write_rows_csv(out / "compare.csv", rows)
    write_rows_json(out / "report.json", rows, _config_document(args, config))
    for line in format_rows(rows):
        print(line)
    print(f"wrote {out / 'compare.csv'}")
    return EXIT_OK


def cmd_trace(args: argparse.Namespace, config: CliConfig) -> int:
    path = _trace_path(args, config)
    if args.action == "record":
        record_trace(config.scenario, path)
        print(f"wrote {path}")
        return EXIT_OK

    trace = read_trace(path)
    out = Path(config.run.out_dir)
    if args.sweep:
        key, values = parse_sweep(args.sweep)
        rows = run_sweep(config, key, values, policy=args.policy, trace=trace)
        write_rows_csv(out / "sweep.csv", rows)
        for line in format_rows(rows):
            print(line)
        print(f"wrote {out / 'sweep.csv'}")
        return EXIT_OK

    report = replay_policy(config, trace, args.policy)
    write_report(out / "report.json", report, _config_document(args, config))
    write_steps_csv(out / "steps.csv", report)
    print(format_summary(report))
    print(f"wrote {out / 'report.json'}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "trace": cmd_trace}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args, overrides = parse_args(argv)
    _configure_logging(args)
    try:
        config = _load(args, overrides)
        return COMMANDS[args.command](args, config)
    except ConfigError as exc:
        print(f"Invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (WorldCacheError, OSError) as exc:
        logger.debug("%s failed", args.command, exc_info=True)
        print(f"Run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
