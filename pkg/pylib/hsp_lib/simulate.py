"""Trace replay loop and the per-run metrics report.

``run_trace`` drives any placement policy over a trace against an
``HssState``: decide, serve, then let the policy observe the outcome (and
the request that follows, for policies that learn from it).
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np

from hsp_lib.hssenv import HssState
from hsp_lib.trace import StorageRequest
from hsp_lib.types import NS_PER_SECOND

if TYPE_CHECKING:
    from hsp_lib.baselines import PlacementPolicy

PHASE_WINDOW = 1000  # requests per timeline bucket
PROGRESS_EVERY = 100_000

# Frozen column order for downstream plotting scripts.
CSV_COLUMNS: tuple[str, ...] = (
    "workload",
    "policy",
    "config_hash",
    "seed",
    "n_requests",
    "avg_latency_ns",
    "normalized_latency",
    "iops",
    "normalized_iops",
    "eviction_ratio",
    "fast_preference",
    "evictions",
    "promotions",
    "demotions",
    "explored",
    "training_rounds",
    "weight_syncs",
    "grid_point",
)


@dataclass(frozen=True)
class Decision:
    action: int
    explored: bool = False


@dataclass(frozen=True)
class PhaseStats:
    start: int  # index of the first request in the window
    n_requests: int
    avg_latency_ns: float
    fast_preference: float
    evictions: int

    def to_dict(self) -> dict[str, float | int]:
        return {
            "start": self.start,
            "n_requests": self.n_requests,
            "avg_latency_ns": self.avg_latency_ns,
            "fast_preference": self.fast_preference,
            "evictions": self.evictions,
        }


@dataclass
class MetricsReport:
    policy: str
    workload: str
    n_requests: int
    avg_latency_ns: float
    total_service_ns: float
    iops: float
    evictions: int
    eviction_ratio: float
    promotions: int
    demotions: int
    fast_placements: int
    fast_preference: float
    explored: int
    background_latency_ns: float
    phases: list[PhaseStats] = field(default_factory=list)
    per_workload: dict[int, dict[str, float | int]] = field(default_factory=dict)
    training_rounds: int = 0
    weight_syncs: int = 0
    # filled in by the experiment layer once Fast-Only has run
    normalized_latency: float | None = None
    normalized_iops: float | None = None
    config_hash: str = ""
    seed: int = 0
    grid_point: dict[str, Any] = field(default_factory=dict)
    latencies: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    @property
    def exploration_fraction(self) -> float:
        return self.explored / self.n_requests if self.n_requests else 0.0

    def normalize_to(self, baseline: MetricsReport) -> None:
        """Fill the normalized fields relative to ``baseline`` (Fast-Only)."""
        self.normalized_latency = (
            self.avg_latency_ns / baseline.avg_latency_ns if baseline.avg_latency_ns else None
        )
        self.normalized_iops = self.iops / baseline.iops if baseline.iops else None

    def to_dict(self) -> dict[str, Any]:
        return {
            "workload": self.workload,
            "policy": self.policy,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "n_requests": self.n_requests,
            "avg_latency_ns": self.avg_latency_ns,
            "normalized_latency": self.normalized_latency,
            "total_service_ns": self.total_service_ns,
            "iops": self.iops,
            "normalized_iops": self.normalized_iops,
            "evictions": self.evictions,
            "eviction_ratio": self.eviction_ratio,
            "promotions": self.promotions,
            "demotions": self.demotions,
            "fast_placements": self.fast_placements,
            "fast_preference": self.fast_preference,
            "explored": self.explored,
            "exploration_fraction": self.exploration_fraction,
            "background_latency_ns": self.background_latency_ns,
            "training_rounds": self.training_rounds,
            "weight_syncs": self.weight_syncs,
            "grid_point": self.grid_point,
            "phases": [p.to_dict() for p in self.phases],
            "per_workload": {str(k): v for k, v in sorted(self.per_workload.items())},
        }

    def csv_row(self) -> dict[str, Any]:
        d = self.to_dict()
        row = {col: d[col] for col in CSV_COLUMNS}
        row["grid_point"] = ";".join(f"{k}={v}" for k, v in sorted(self.grid_point.items()))
        for col in ("normalized_latency", "normalized_iops"):
            if row[col] is None:
                row[col] = ""
        return row


def _preference(fast: int, total: int) -> float:
    return fast / total if total else 0.0


def run_trace(
    policy: PlacementPolicy,
    trace: Sequence[StorageRequest],
    env: HssState,
    *,
    workload: str = "",
    progress: Callable[[int], None] | None = None,
) -> MetricsReport:
    """Replay ``trace`` under ``policy`` and summarise the run."""
    n = len(trace)
    latencies = np.zeros(n, dtype=np.float64)
    tiers = np.zeros(n, dtype=np.int64)
    evicted = np.zeros(n, dtype=np.int64)
    explored = 0

    policy.prepare(env, trace)
    for i, request in enumerate(trace):
        upcoming = trace[i + 1] if i + 1 < n else None
        decision = policy.decide(env, request, upcoming)
        outcome = env.serve(request, decision.action)
        policy.observe(env, request, decision, outcome, upcoming)

        latencies[i] = outcome.latency_ns
        tiers[i] = decision.action
        evicted[i] = len(outcome.evicted_pages)
        explored += decision.explored
        if progress is not None and (i + 1) % PROGRESS_EVERY == 0:
            progress(i + 1)
    policy.finish(env)

    total_service = float(latencies.sum())
    fast = int((tiers == 0).sum())

    phases = []
    for start in range(0, n, PHASE_WINDOW):
        window = slice(start, min(start + PHASE_WINDOW, n))
        count = window.stop - start
        phases.append(
            PhaseStats(
                start=start,
                n_requests=count,
                avg_latency_ns=float(latencies[window].mean()),
                fast_preference=_preference(int((tiers[window] == 0).sum()), count),
                evictions=int(evicted[window].sum()),
            )
        )

    per_workload: dict[int, dict[str, float | int]] = {}
    wids = np.array([r.workload_id for r in trace], dtype=np.int64)
    for wid in np.unique(wids):
        mask = wids == wid
        count = int(mask.sum())
        per_workload[int(wid)] = {
            "n_requests": count,
            "avg_latency_ns": float(latencies[mask].mean()),
            "fast_preference": _preference(int((tiers[mask] == 0).sum()), count),
            "evictions": int(evicted[mask].sum()),
        }

    return MetricsReport(
        policy=policy.name,
        workload=workload,
        n_requests=n,
        avg_latency_ns=total_service / n if n else 0.0,
        total_service_ns=total_service,
        iops=n / (total_service / NS_PER_SECOND) if total_service else 0.0,
        evictions=env.evictions,
        eviction_ratio=env.evictions / n if n else 0.0,
        promotions=env.promotions,
        demotions=env.demotions,
        fast_placements=fast,
        fast_preference=_preference(fast, n),
        explored=explored,
        background_latency_ns=env.background_latency_ns,
        phases=phases,
        per_workload=per_workload,
        training_rounds=getattr(policy, "training_rounds", 0),
        weight_syncs=getattr(policy, "weight_syncs", 0),
        latencies=latencies,
    )
