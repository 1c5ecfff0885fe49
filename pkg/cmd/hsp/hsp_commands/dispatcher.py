"""Command-line entry point for hsp.

Usage: hsp <command> [args...]

Commands:
  run       run the configured policy on every configured trace
  sweep     run a hyperparameter grid over a config
  stats     summarise a trace file or bundled workload
  validate  check a config without running it
  profiles  list device presets and hybrid configurations

Exit codes: 0 on success, 1 on failure (one line of error JSON on stderr),
2 when the input selects nothing to do.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any

from hsp_lib import console, paths
from hsp_lib.config import load_config, load_grid, with_policy
from hsp_lib.devices import CONFIGURATIONS, PRESETS
from hsp_lib.errors import HspError, NothingToDoError
from hsp_lib.experiment import (
    SUMMARY_HEADERS,
    run_experiment,
    summary_rows,
    sweep,
    validate_experiment,
)
from hsp_lib.simulate import MetricsReport
from hsp_lib.trace import BUNDLED_WORKLOADS, MIX_PRESETS, build_mix, bundled_trace, load_msrc, workload_stats

VERSION = "0.1.0"

EXIT_FAILURE = 1
EXIT_NOTHING_TO_DO = 2


def error_json(exc: BaseException) -> str:
    """One-line machine-readable description of ``exc``."""
    return json.dumps(
        {
            "error": type(exc).__name__,
            "message": str(exc),
            "field": getattr(exc, "field", None),
            "line": getattr(exc, "line_no", None),
            "source": getattr(exc, "source", None),
        }
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _print_summary(reports: list[MetricsReport]) -> None:
    rows = summary_rows(reports)
    roles = [
        [None, console.Role.POLICY, None, console.normalized_role(r.normalized_latency), None, None, None]
        for r in reports
    ]
    print(console.format_table(SUMMARY_HEADERS, rows, roles=roles))


def _report_written(written: list[Path]) -> None:
    if written:
        console.phase(f"wrote {len(written)} files to {written[0].parent}")


def _config_path(args: argparse.Namespace) -> Path:
    return Path(args.config) if args.config else paths.config_file()


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(_config_path(args))
    if args.policy is not None:
        cfg = with_policy(cfg, args.policy)
    result = run_experiment(cfg, verbose=args.verbose, save_weights=args.save_weights)
    _print_summary(result.reports)
    _report_written(result.written)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = load_config(Path(args.config))
    grid = load_grid(Path(args.grid))
    result = sweep(cfg, grid, jobs=args.jobs, verbose=args.verbose)
    _print_summary(result.reports)
    _report_written(result.written)
    return 0


def _load_trace_arg(value: str) -> list[Any]:
    path = Path(value)
    if path.exists():
        return load_msrc(path)
    if value in BUNDLED_WORKLOADS:
        return bundled_trace(value)
    if value in MIX_PRESETS:
        return build_mix(value, 0)
    raise NothingToDoError(f"no trace file or bundled workload named '{value}'", "trace")


def cmd_stats(args: argparse.Namespace) -> int:
    requests = _load_trace_arg(args.trace)
    if not requests:
        raise NothingToDoError("trace has no requests", "trace")
    stats = workload_stats(requests)
    if args.json:
        print(json.dumps(stats.to_dict(), indent=2))
        return 0
    kind = "write-intensive" if stats.is_write_intensive else "read-intensive"
    rows = [
        ["requests", stats.n_requests],
        ["unique pages", stats.unique_pages],
        ["write fraction", stats.write_fraction],
        ["read fraction", stats.read_fraction],
        ["avg request pages", stats.avg_request_size_pages],
        ["avg accesses/page", stats.avg_access_count],
        ["class", kind],
    ]
    print(console.format_table(["statistic", args.trace], rows))
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    path = _config_path(args)
    cfg = load_config(path)
    validate_experiment(cfg)
    print(f"ok: {cfg.source or path} ({cfg.config_hash()})")
    return 0


def cmd_profiles(args: argparse.Namespace) -> int:
    if args.json:
        doc = {
            "presets": {name: p.to_dict() for name, p in sorted(PRESETS.items())},
            "configurations": {name: list(tiers) for name, tiers in CONFIGURATIONS.items()},
        }
        print(json.dumps(doc, indent=2))
        return 0
    headers = ["preset", "read_ns/page", "write_ns/page", "seq_read_MB/s", "seq_write_MB/s", "seek_ns"]
    rows = [
        [
            name,
            p.read_latency_per_page,
            p.write_latency_per_page,
            p.seq_read_bandwidth / 1e6,
            p.seq_write_bandwidth / 1e6,
            p.seek_penalty,
        ]
        for name, p in sorted(PRESETS.items())
    ]
    print(console.format_table(headers, rows))
    print()
    print(console.format_table(["configuration", "tiers"], [[n, " > ".join(t)] for n, t in CONFIGURATIONS.items()]))
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hsp",
        description="Simulate data placement policies on hybrid storage systems.",
    )
    parser.add_argument("--version", "-V", action="version", version=f"hsp {VERSION}")
    sub = parser.add_subparsers(dest="command", metavar="<command>")

    run = sub.add_parser("run", help="Run the configured policy on every configured trace")
    run.add_argument("config", nargs="?", help="Path to experiment KDL config (default: hsp.kdl in the config dir)")
    run.add_argument("--policy", metavar="NAME", help="Override the config's policy")
    run.add_argument("--verbose", "-v", action="store_true", help="Print phase and progress lines")
    run.add_argument(
        "--save-weights",
        action="store_true",
        help="Write the final inference network next to each agent report",
    )
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="Run a hyperparameter grid over a config")
    sw.add_argument("config", help="Path to experiment KDL config")
    sw.add_argument("grid", help="Path to grid KDL file")
    sw.add_argument("--jobs", "-j", type=int, default=1, metavar="N", help="Grid points run in parallel")
    sw.add_argument("--verbose", "-v", action="store_true", help="Print phase and progress lines")
    sw.set_defaults(func=cmd_sweep)

    st = sub.add_parser("stats", help="Summarise a trace file or bundled workload")
    st.add_argument("trace", help="MSRC CSV path, bundled workload or mix preset name")
    st.add_argument("--json", action="store_true", help="Print statistics as JSON")
    st.set_defaults(func=cmd_stats)

    va = sub.add_parser("validate", help="Check a config without running it")
    va.add_argument("config", nargs="?", help="Path to experiment KDL config (default: hsp.kdl in the config dir)")
    va.set_defaults(func=cmd_validate)

    pr = sub.add_parser("profiles", help="List device presets and hybrid configurations")
    pr.add_argument("--json", action="store_true", help="Print presets as JSON")
    pr.set_defaults(func=cmd_profiles)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 0

    try:
        return args.func(args)
    except NothingToDoError as exc:
        print(error_json(exc), file=sys.stderr)
        return EXIT_NOTHING_TO_DO
    except (HspError, OSError) as exc:
        print(error_json(exc), file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
