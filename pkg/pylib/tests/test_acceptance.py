"""End-to-end checks on whole traces.

Long runs are marked ``slow`` and deselected by default; run them with
``pytest -m slow``. The MSRC replication needs ``HSP_MSRC_DIR`` pointing at
a directory of MSRC CSV files.
"""

from __future__ import annotations

import os
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from hsp_lib.agent import PlacementAgent
from hsp_lib.baselines import OraclePolicy, SlowOnlyPolicy, make_policy
from hsp_lib.c51 import Hyperparams
from hsp_lib.config import parse_config
from hsp_lib.devices import preset
from hsp_lib.experiment import (
    build_tiers,
    csv_text,
    materialize_trace,
    run_experiment,
    run_one,
    working_set,
)
from hsp_lib.hssenv import HssState
from hsp_lib.simulate import run_trace
from hsp_lib.trace import BUNDLED_WORKLOADS, bundled_trace, load_msrc
from hsp_lib.types import ExecMode, PolicyName

CONVERGENCE_CONFIG = """\
version 1
seed {seed}
mode "{mode}"
trace "hotcold" {{ bundled "hotcold"; }}
devices "H&M" {{
    tier "H" {{ capacity 1; }}
    tier "M" {{ capacity "100%"; }}
}}
policy "agent"
"""

TRI_CONFIG = """\
version 1
seed {seed}
trace "{trace}" {{ bundled "{trace}"; }}
devices "H&M&L"
policy "{policy}"
"""


def _tiers(trace, fast_pages: int):
    ws = working_set(trace)
    return [preset("H").with_capacity(fast_pages), preset("M").with_capacity(ws)]


class TestMicroTraceOrdering:
    @pytest.mark.parametrize("name", sorted(BUNDLED_WORKLOADS))
    @pytest.mark.parametrize("fast_pages", [1, 2])
    def test_fast_only_oracle_slow_only(self, name, fast_pages):
        trace = bundled_trace(name)[:12]
        ws = working_set(trace)

        fast_env = HssState([preset("H").with_capacity(ws), preset("M").with_capacity(ws)])
        fast = run_trace(make_policy(PolicyName.FAST_ONLY), trace, fast_env)
        oracle = run_trace(OraclePolicy(), trace, HssState(_tiers(trace, fast_pages)))
        slow = run_trace(SlowOnlyPolicy(), trace, HssState(_tiers(trace, fast_pages)))

        assert fast.total_service_ns <= oracle.total_service_ns + 1e-6
        assert oracle.total_service_ns <= slow.total_service_ns + 1e-6


@pytest.mark.slow
class TestConvergenceTrace:
    def _cfg(self, seed: int, mode: str = "deterministic"):
        return parse_config(CONVERGENCE_CONFIG.format(seed=seed, mode=mode))

    def test_training_cadence(self):
        cfg = self._cfg(0)
        run = run_one(cfg, materialize_trace(cfg, cfg.traces[0]), "hotcold")
        assert run.report.n_requests == 20_000
        assert run.report.training_rounds == 20
        assert run.report.weight_syncs == 20
        assert run.report.normalized_latency >= 1.0

    def test_deterministic_csv_is_reproducible(self):
        cfg = self._cfg(3)
        first = csv_text(run_experiment(cfg, write=False).reports)
        second = csv_text(run_experiment(cfg, write=False).reports)
        assert first == second

    def test_threaded_mode_trains_every_round(self):
        cfg = self._cfg(3, "threaded")
        run = run_one(cfg, materialize_trace(cfg, cfg.traces[0]), "hotcold")
        assert run.report.training_rounds == 20
        assert run.agent is not None
        assert len(run.agent.log.losses) == 20

    def test_exploration_rate(self):
        cfg = self._cfg(1)
        run = run_one(cfg, materialize_trace(cfg, cfg.traces[0]), "hotcold")
        # epsilon 0.001 over 20k requests: 20 expected
        assert run.report.explored < 60


def _mean_latency(trace, tiers, seeds=range(5), **kwargs) -> float:
    return float(
        np.mean([PlacementAgent(tiers, seed=s, **kwargs).run(trace).avg_latency_ns for s in seeds])
    )


@pytest.mark.slow
class TestHotColdLearning:
    """The agent on the bundled hot/cold trace with a one-page fast tier."""

    @pytest.fixture(scope="class")
    def trace(self):
        return bundled_trace("hotcold")

    @pytest.mark.parametrize("seed", range(5))
    def test_hot_page_kept_fast(self, trace, seed):
        hot = Counter(r.page for r in trace).most_common(1)[0][0]
        agent = PlacementAgent(_tiers(trace, 1), seed=seed)
        actions = []
        for i, request in enumerate(trace):
            upcoming = trace[i + 1] if i + 1 < len(trace) else None
            actions.append(agent.step(request, upcoming).action)
        agent.finish(agent.env)
        agent.close()

        tail = range(len(trace) - 5_000, len(trace))
        hot_actions = [actions[i] for i in tail if trace[i].page == hot]
        assert hot_actions
        assert hot_actions.count(0) / len(hot_actions) >= 0.9

    @pytest.mark.parametrize("seed", range(5))
    def test_beats_random_placement(self, trace, seed):
        tiers = _tiers(trace, 1)
        agent = PlacementAgent(tiers, seed=seed).run(trace)
        random = run_trace(make_policy(PolicyName.RANDOM, seed=seed), trace, HssState(tiers))
        assert agent.avg_latency_ns <= 0.9 * random.avg_latency_ns

    def test_heavy_exploration_hurts(self, trace):
        tiers = _tiers(trace, 1)
        default = _mean_latency(trace, tiers)
        assert _mean_latency(trace, tiers, hyperparams=Hyperparams(epsilon=0.1)) > default

    def test_zero_discount_hurts(self, trace):
        # the value support stays at its default range so only the discount changes
        tiers = _tiers(trace, 1)
        default = Hyperparams()
        myopic = Hyperparams(gamma=0.0, v_max=default.support_max)
        assert _mean_latency(trace, tiers, hyperparams=myopic) > _mean_latency(trace, tiers)

    def test_threaded_latency_tracks_deterministic(self, trace):
        tiers = _tiers(trace, 1)
        deterministic = _mean_latency(trace, tiers)
        threaded = _mean_latency(trace, tiers, mode=ExecMode.THREADED)
        assert abs(threaded - deterministic) <= 0.05 * deterministic


@pytest.mark.slow
class TestEvictionPenalty:
    def test_penalty_reduces_evictions(self):
        trace = bundled_trace("scan-mix")
        tiers = _tiers(trace, max(1, working_set(trace) // 10))

        def mean_evictions(penalty: float) -> float:
            return float(
                np.mean(
                    [
                        PlacementAgent(tiers, eviction_penalty=penalty, seed=s).run(trace).evictions
                        for s in range(5)
                    ]
                )
            )

        assert mean_evictions(0.001) < mean_evictions(0.0)


@pytest.mark.slow
class TestTriHybrid:
    @pytest.mark.parametrize("policy", ["agent", "tri-heuristic"])
    def test_three_tiers_from_config_alone(self, policy):
        cfg = parse_config(TRI_CONFIG.format(seed=0, trace="balanced", policy=policy))
        run = run_one(cfg, materialize_trace(cfg, cfg.traces[0]), "balanced")
        assert [d.name for d in run.devices] == ["H", "M", "L"]
        assert len(run.env_state["tiers"]) == 3
        assert run.report.normalized_latency >= 1.0

    @pytest.mark.parametrize("trace_name", ["balanced", "read-heavy", "scan-mix"])
    def test_agent_beats_random_placement(self, trace_name):
        cfg = parse_config(TRI_CONFIG.format(seed=0, trace=trace_name, policy="agent"))
        trace = materialize_trace(cfg, cfg.traces[0])
        tiers = build_tiers(cfg, trace)
        agent = _mean_latency(trace, tiers, seeds=range(3))
        random = np.mean(
            [
                run_trace(make_policy(PolicyName.RANDOM, seed=s), trace, HssState(tiers)).avg_latency_ns
                for s in range(3)
            ]
        )
        assert agent < random

    def test_agent_network_has_three_actions(self):
        trace = bundled_trace("hotcold")
        ws = working_set(trace)
        tiers = [preset(n).with_capacity(ws) for n in ("H", "M", "L")]
        agent = PlacementAgent(tiers, hyperparams=Hyperparams(n_atoms=11))
        assert agent.inference.n_actions == 3


@pytest.mark.slow
@pytest.mark.skipif(not os.environ.get("HSP_MSRC_DIR"), reason="HSP_MSRC_DIR not set")
class TestMsrcReplication:
    def test_agent_not_slower_than_heuristics_on_most_traces(self):
        root = Path(os.environ["HSP_MSRC_DIR"])
        files = sorted(root.glob("*.csv"))
        if not files:
            pytest.skip(f"no MSRC CSV files in {root}")

        wins = 0
        for path in files:
            trace = load_msrc(path)
            text = f'version 1\ntrace "t" {{ path "{path}"; }}\ndevices "H&M"\npolicy "agent"\n'
            cfg = parse_config(text)
            latency = {}
            for name in (PolicyName.AGENT, PolicyName.CDE, PolicyName.HPS):
                run_cfg = cfg if name == PolicyName.AGENT else parse_config(text.replace('"agent"', f'"{name}"'))
                latency[name] = run_one(run_cfg, trace, path.stem).report.avg_latency_ns
            if latency[PolicyName.AGENT] <= min(latency[PolicyName.CDE], latency[PolicyName.HPS]):
                wins += 1
        assert wins >= round(len(files) * 10 / 14)
