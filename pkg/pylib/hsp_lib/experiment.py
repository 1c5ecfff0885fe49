"""Experiment runner: build traces, devices and policies from a config, run
them, normalise against Fast-Only, and write JSON/CSV reports.
"""

from __future__ import annotations

import concurrent.futures
import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from hsp_lib import console
from hsp_lib.agent import PlacementAgent
from hsp_lib.baselines import FastOnlyPolicy, make_policy
from hsp_lib.config import ExperimentConfig, TraceSource, apply_grid_point, grid_points
from hsp_lib.devices import DeviceProfile
from hsp_lib.errors import ConfigError, NothingToDoError, PolicyError
from hsp_lib.hssenv import HssState
from hsp_lib.network import save_checkpoint
from hsp_lib.overhead import overhead_report
from hsp_lib.paths import output_dir
from hsp_lib.simulate import CSV_COLUMNS, MetricsReport, run_trace
from hsp_lib.trace import (
    StorageRequest,
    build_mix,
    bundled_trace,
    gen_synthetic,
    load_msrc,
    mix_traces,
)
from hsp_lib.types import PolicyName


@dataclass
class RunResult:
    report: MetricsReport
    baseline: MetricsReport
    devices: list[DeviceProfile]
    env_state: dict[str, Any]
    overhead: dict[str, Any] | None = None
    agent: PlacementAgent | None = None

    def to_json(self, cfg: ExperimentConfig) -> dict[str, Any]:
        doc = self.report.to_dict()
        doc["fast_only"] = {
            "avg_latency_ns": self.baseline.avg_latency_ns,
            "iops": self.baseline.iops,
        }
        doc["devices"] = [d.to_dict() for d in self.devices]
        doc["env_state"] = self.env_state
        doc["config"] = cfg.to_dict()
        if self.overhead is not None:
            doc["overhead"] = self.overhead
        return doc


@dataclass
class ExperimentResult:
    results: list[RunResult] = field(default_factory=list)
    written: list[Path] = field(default_factory=list)

    @property
    def reports(self) -> list[MetricsReport]:
        return [r.report for r in self.results]


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------


def materialize_trace(
    cfg: ExperimentConfig,
    source: TraceSource,
    *,
    _seen: frozenset[str] = frozenset(),
) -> list[StorageRequest]:
    """Load or generate the requests of one configured trace."""
    if source.name in _seen:
        raise ConfigError("mix members form a cycle", f"trace.{source.name}.mix")
    match source.kind:
        case "msrc":
            assert source.path is not None
            return load_msrc(source.path)
        case "bundled":
            assert source.bundled is not None
            return bundled_trace(source.bundled)
        case "synthetic":
            assert source.synthetic is not None
            return gen_synthetic(source.synthetic)
        case "mix-preset":
            assert source.bundled is not None
            return build_mix(source.bundled, cfg.seed)
        case "mix":
            members = []
            for name, _ in source.members:
                if any(t.name == name for t in cfg.traces):
                    member = cfg.trace(name)
                else:
                    member = TraceSource(name, "bundled", bundled=name)
                members.append(materialize_trace(cfg, member, _seen=_seen | {source.name}))
            return mix_traces(members, [offset for _, offset in source.members])
    raise ConfigError(f"unknown trace kind '{source.kind}'", f"trace.{source.name}")


def working_set(trace: list[StorageRequest]) -> int:
    return len({p for r in trace for p in r.pages})


def build_tiers(cfg: ExperimentConfig, trace: list[StorageRequest]) -> list[DeviceProfile]:
    ws = max(1, working_set(trace))
    return [t.build(ws) for t in cfg.tiers]


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


def _fast_only(
    cfg: ExperimentConfig, trace: list[StorageRequest], tiers: list[DeviceProfile], workload: str
) -> MetricsReport:
    unbounded = [tiers[0].with_capacity(max(tiers[0].capacity_pages, working_set(trace))), *tiers[1:]]
    env = HssState(unbounded, charge_migration_read=cfg.charge_migration_read)
    return run_trace(FastOnlyPolicy(), trace, env, workload=workload)


def run_one(
    cfg: ExperimentConfig,
    trace: list[StorageRequest],
    workload: str,
    *,
    baseline: MetricsReport | None = None,
    verbose: bool = False,
    grid_point: dict[str, Any] | None = None,
) -> RunResult:
    """Run ``cfg.policy`` on one trace and normalise it against Fast-Only."""
    if not trace:
        raise NothingToDoError("trace has no requests", f"trace.{workload}")
    tiers = build_tiers(cfg, trace)
    if baseline is None:
        baseline = _fast_only(cfg, trace, tiers, workload)

    def progress(n: int) -> None:
        console.phase(f"{workload}/{cfg.policy}: {n} requests", verbose=verbose)

    agent = None
    overhead = None
    if cfg.policy == PolicyName.AGENT:
        agent = PlacementAgent(
            tiers,
            hyperparams=cfg.hyperparams,
            eviction_penalty=cfg.eviction_penalty,
            seed=cfg.seed,
            mode=cfg.mode,
            charge_migration_read=cfg.charge_migration_read,
        )
        report = agent.run(trace, workload=workload, progress=progress)
        if report.training_rounds == 0:
            console.warn(
                f"{workload}: agent never trained ({len(trace)} requests, "
                f"buffer {cfg.hyperparams.buffer_size}, sync every {cfg.hyperparams.sync_interval})"
            )
        env = agent.env
        overhead = overhead_report(cfg.hyperparams, len(tiers)).to_dict()
    else:
        policy = make_policy(cfg.policy, cfg.policy_params, seed=cfg.seed)
        env = HssState(tiers, charge_migration_read=cfg.charge_migration_read)
        report = run_trace(policy, trace, env, workload=workload, progress=progress)

    report.config_hash = cfg.config_hash()
    report.seed = cfg.seed
    report.grid_point = dict(grid_point or {})
    if cfg.policy == PolicyName.FAST_ONLY:
        report.normalize_to(report)
    else:
        report.normalize_to(baseline)
    return RunResult(report, baseline, tiers, env.dump_state(), overhead, agent)


def validate_experiment(cfg: ExperimentConfig) -> None:
    """Checks that need more than the config file itself."""
    if cfg.policy != PolicyName.AGENT:
        try:
            make_policy(cfg.policy, cfg.policy_params, seed=cfg.seed)
        except PolicyError as exc:
            raise ConfigError(str(exc), "policy") from None


def run_experiment(
    cfg: ExperimentConfig,
    *,
    verbose: bool = False,
    write: bool = True,
    save_weights: bool = False,
) -> ExperimentResult:
    """Run the configured policy on every configured trace."""
    validate_experiment(cfg)
    result = ExperimentResult()
    for source in cfg.traces:
        console.phase(f"load trace {source.name}", verbose=verbose)
        trace = materialize_trace(cfg, source)
        with console.Timer() as t:
            run = run_one(cfg, trace, source.name, verbose=verbose)
        console.phase(f"{source.name}/{cfg.policy}: {t}", verbose=verbose)
        result.results.append(run)

    if write:
        out = output_dir(cfg.output_dir) / cfg.config_hash()
        result.written.extend(write_reports(cfg, result.results, out, save_weights=save_weights))
    return result


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def sweep(
    cfg: ExperimentConfig,
    grid: dict[str, list[Any]],
    *,
    jobs: int = 1,
    verbose: bool = False,
    write: bool = True,
) -> ExperimentResult:
    """Run the cross product of ``grid``; each report is tagged with its point."""
    validate_experiment(cfg)
    points = grid_points(grid)
    configs = [apply_grid_point(cfg, p) for p in points]

    traces = {s.name: materialize_trace(cfg, s) for s in cfg.traces}
    tasks = [(c, p, name) for c, p in zip(configs, points) for name in traces]

    def run_task(task: tuple[ExperimentConfig, dict[str, Any], str]) -> RunResult:
        c, p, name = task
        console.phase(f"grid point {p} on {name}", verbose=verbose)
        return run_one(c, traces[name], name, grid_point=p)

    result = ExperimentResult()
    with console.Timer() as t:
        if jobs <= 1:
            result.results = [run_task(task) for task in tasks]
        else:
            with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
                result.results = list(pool.map(run_task, tasks))
    console.phase(f"sweep of {len(tasks)} runs: {t}", verbose=verbose)

    if write:
        out = output_dir(cfg.output_dir) / f"sweep-{cfg.config_hash()}"
        result.written.extend(write_reports(cfg, result.results, out, configs=configs, points=points))
    return result


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def csv_text(reports: list[MetricsReport]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(CSV_COLUMNS), lineterminator="\n")
    writer.writeheader()
    for report in reports:
        writer.writerow(report.csv_row())
    return buf.getvalue()


def _report_stem(report: MetricsReport) -> str:
    stem = f"{report.workload}-{report.policy}-s{report.seed}"
    if report.grid_point:
        stem += "-" + "-".join(f"{k}{v}" for k, v in sorted(report.grid_point.items()))
    return stem.replace("/", "_").replace("%", "pct")


def write_reports(
    cfg: ExperimentConfig,
    results: list[RunResult],
    out: Path,
    *,
    save_weights: bool = False,
    configs: list[ExperimentConfig] | None = None,
    points: list[dict[str, Any]] | None = None,
) -> list[Path]:
    """Write one JSON document per run plus a combined results.csv."""
    out.mkdir(parents=True, exist_ok=True)
    by_point = {}
    if configs is not None and points is not None:
        by_point = {json.dumps(p, sort_keys=True): c for c, p in zip(configs, points)}

    written = []
    for run in results:
        run_cfg = by_point.get(json.dumps(run.report.grid_point, sort_keys=True), cfg)
        stem = _report_stem(run.report)
        path = out / f"{stem}.json"
        path.write_text(json.dumps(run.to_json(run_cfg), indent=2) + "\n", encoding="utf-8")
        written.append(path)
        if save_weights and run.agent is not None:
            weights = out / f"{stem}.weights.msgpack"
            save_checkpoint(run.agent.inference, weights)
            written.append(weights)

    csv_path = out / "results.csv"
    csv_path.write_text(csv_text([r.report for r in results]), encoding="utf-8")
    written.append(csv_path)
    return written


def summary_rows(reports: list[MetricsReport]) -> list[list[Any]]:
    return [
        [
            r.workload,
            r.policy,
            r.avg_latency_ns,
            r.normalized_latency,
            r.iops,
            r.eviction_ratio,
            r.fast_preference,
        ]
        for r in reports
    ]


SUMMARY_HEADERS = ["workload", "policy", "avg_ns", "norm", "iops", "evict", "fast_pref"]
