"""Tests for baselines: heuristic policies and the clairvoyant oracle."""

from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hsp_lib.baselines import (
    CdePolicy,
    FastOnlyPolicy,
    HpsPolicy,
    OracleIndex,
    OraclePolicy,
    RandomPolicy,
    SlowOnlyPolicy,
    TriHeuristicPolicy,
    make_policy,
    plan_exact,
)
from hsp_lib.devices import preset
from hsp_lib.errors import PolicyError
from hsp_lib.hssenv import HssState
from hsp_lib.simulate import run_trace
from hsp_lib.trace import StorageRequest
from hsp_lib.types import Op, PolicyName

H = preset("H")
M = preset("M")
L = preset("L")


def _env(fast: int = 2, slow: int = 50) -> HssState:
    return HssState([H.with_capacity(fast), M.with_capacity(slow)])


def _tri_env() -> HssState:
    return HssState([H.with_capacity(2), M.with_capacity(8), L.with_capacity(100)])


def _req(page: int, op: Op = Op.READ, size: int = 1, t: int = 0) -> StorageRequest:
    return StorageRequest(t, op, page, size)


def _warm(env: HssState, page: int, times: int, tier: int = 1) -> None:
    for _ in range(times):
        env.serve(_req(page), tier)


class TestSimplePolicies:
    def test_fast_only(self):
        env = _env(fast=4)
        trace = [_req(i) for i in range(4)]
        report = run_trace(FastOnlyPolicy(), trace, env)
        assert report.fast_preference == 1.0

    def test_fast_only_rejects_small_fast_tier(self):
        with pytest.raises(PolicyError):
            FastOnlyPolicy().prepare(_env(fast=2), [_req(i) for i in range(3)])

    def test_slow_only(self):
        env = _tri_env()
        report = run_trace(SlowOnlyPolicy(), [_req(i) for i in range(5)], env)
        assert set(env.page_map.values()) == {2}
        assert report.fast_preference == 0.0

    def test_random_reseeds_each_run(self):
        policy = RandomPolicy(seed=3)
        trace = [_req(i) for i in range(30)]
        a = run_trace(policy, trace, _env(fast=40))
        b = run_trace(policy, trace, _env(fast=40))
        assert np.array_equal(a.latencies, b.latencies)
        assert 0 < a.fast_placements < 30


class TestCde:
    policy = CdePolicy(hot_threshold=4, random_threshold=8)

    def test_small_write_goes_fast(self):
        assert self.policy.decide(_env(), _req(0, Op.WRITE, 8), None).action == 0

    def test_large_cold_write_goes_slow(self):
        assert self.policy.decide(_env(), _req(0, Op.WRITE, 9), None).action == 1

    def test_large_hot_write_goes_fast(self):
        env = _env()
        _warm(env, 0, 4)
        assert self.policy.decide(env, _req(0, Op.WRITE, 9), None).action == 0

    def test_hot_read_promotes(self):
        env = _env()
        _warm(env, 0, 4)
        assert self.policy.decide(env, _req(0), None).action == 0

    def test_cold_read_stays(self):
        env = _env()
        _warm(env, 0, 3)
        assert self.policy.decide(env, _req(0), None).action == 1

    def test_unplaced_read_goes_slow(self):
        assert self.policy.decide(_env(), _req(5), None).action == 1

    def test_invalid_thresholds(self):
        with pytest.raises(PolicyError):
            CdePolicy(hot_threshold=0)


class TestHps:
    def test_fills_fast_first(self):
        policy = HpsPolicy(epoch=100)
        env = _env(fast=2)
        trace = [_req(i) for i in range(4)]
        run_trace(policy, trace, env)
        assert env.residents(0) == {0, 1}
        assert env.residents(1) == {2, 3}

    def test_fast_resident_stays(self):
        policy = HpsPolicy()
        env = _env(fast=1)
        env.serve(_req(0), 0)
        assert policy.decide(env, _req(0), None).action == 0
        assert policy.decide(env, _req(1), None).action == 1

    def test_epoch_demotes_cold_residents(self):
        policy = HpsPolicy(epoch=8)
        env = _env(fast=4)
        # pages 0..3 fill the fast tier; 0 and 1 are reused, 2 and 3 fall below the median
        trace = [_req(p) for p in (0, 1, 2, 3, 0, 0, 1, 1)]
        run_trace(policy, trace, env)
        assert policy.epochs_completed == 1
        assert env.page_map == {0: 0, 1: 0, 2: 1, 3: 1}
        assert env.demotions == 2

    def test_counts_reset_each_epoch(self):
        policy = HpsPolicy(epoch=2)
        run_trace(policy, [_req(0), _req(1), _req(0), _req(2)], _env(fast=4))
        assert policy.epochs_completed == 2
        assert not policy.epoch_counts

    @given(st.dictionaries(st.integers(0, 40), st.integers(0, 10), min_size=1, max_size=20))
    @settings(max_examples=60, deadline=None)
    def test_cold_pages_median_rule(self, counts):
        policy = HpsPolicy()
        env = _env(fast=64)
        for page in counts:
            env.serve(_req(page), 0)
        policy.epoch_counts.update({p: c for p, c in counts.items() if c})
        ordered = sorted(counts.values())
        mid = len(ordered) // 2
        median = ordered[mid] if len(ordered) % 2 else (ordered[mid - 1] + ordered[mid]) / 2
        expected = sorted(p for p, c in counts.items() if c < median)
        assert policy.cold_pages(env) == expected

    def test_idle_majority_is_not_demoted(self):
        policy = HpsPolicy()
        env = _env(fast=4)
        for page in range(4):
            env.serve(_req(page), 0)
        # median of (0, 0, 0, 5) is 0, so nothing is strictly below it
        policy.epoch_counts.update({3: 5})
        assert policy.cold_pages(env) == []

    def test_invalid_epoch(self):
        with pytest.raises(PolicyError):
            HpsPolicy(epoch=0)


class TestTriHeuristic:
    def test_needs_three_tiers(self):
        with pytest.raises(PolicyError):
            TriHeuristicPolicy().prepare(_env(), [])

    def test_hot_to_fast(self):
        env = _tri_env()
        _warm(env, 0, 4, tier=2)
        assert TriHeuristicPolicy().decide(env, _req(0), None).action == 0

    def test_new_sequential_to_slowest(self):
        assert TriHeuristicPolicy().decide(_tri_env(), _req(0, size=16), None).action == 2

    def test_new_continuation_to_slowest(self):
        policy = TriHeuristicPolicy()
        env = _tri_env()
        policy.prepare(env, [])
        policy.observe(env, _req(0, size=2), None, None, None)
        assert policy.decide(env, _req(2), None).action == 2

    def test_cold_random_to_middle(self):
        env = _tri_env()
        _warm(env, 7, 1, tier=2)
        assert TriHeuristicPolicy().decide(env, _req(7), None).action == 1

    def test_new_random_to_middle(self):
        assert TriHeuristicPolicy().decide(_tri_env(), _req(40), None).action == 1


class TestOracleIndex:
    def test_next_access(self):
        index = OracleIndex([_req(0), _req(1), _req(0, size=2)])
        assert index.next_access(0, 0) == 2
        assert index.next_access(1, 1) == 2
        assert index.next_access(0, 2) == float("inf")
        assert index.next_access(9, 0) == float("inf")

    def test_next_request_access(self):
        index = OracleIndex([_req(0, size=2), _req(5), _req(1)])
        assert index.next_request_access(_req(0, size=2), 0) == 2


def _brute_force(env: HssState, trace: list[StorageRequest]) -> float:
    best = float("inf")
    for actions in itertools.product(range(env.n_tiers), repeat=len(trace)):
        state = env.clone()
        total = sum(state.serve(r, a).latency_ns for r, a in zip(trace, actions))
        best = min(best, total)
    return best


ORACLE_TRACES = [
    [_req(0), _req(1), _req(2), _req(0), _req(1), _req(0), _req(3)],
    [_req(0, Op.WRITE), _req(1), _req(0), _req(2, Op.WRITE), _req(2), _req(1), _req(0)],
    [_req(0, size=2), _req(4), _req(0), _req(1, Op.WRITE), _req(4), _req(5), _req(0)],
]


class TestOracle:
    @pytest.mark.parametrize("trace", ORACLE_TRACES)
    def test_exact_plan_matches_brute_force(self, trace):
        env = _env(fast=2, slow=20)
        policy = OraclePolicy(exact_limit=0)
        policy.prepare(env, trace)
        cost, actions = plan_exact(env, trace)
        assert cost == pytest.approx(_brute_force(env, trace))
        replay = env.clone()
        assert sum(replay.serve(r, a).latency_ns for r, a in zip(trace, actions)) == pytest.approx(cost)

    @pytest.mark.parametrize("trace", ORACLE_TRACES)
    def test_run_follows_exact_plan(self, trace):
        reference = _env(fast=2, slow=20)
        OraclePolicy(exact_limit=0).prepare(reference, trace)
        env = _env(fast=2, slow=20)
        policy = OraclePolicy()
        report = run_trace(policy, trace, env)
        assert report.total_service_ns == pytest.approx(_brute_force(reference, trace))
        assert env.victim_selector is None

    def test_belady_victim_is_farthest_reuse(self):
        trace = [_req(0), _req(1), _req(2), _req(1)]
        env = _env(fast=2)
        policy = OraclePolicy(exact_limit=0)
        policy.prepare(env, trace)
        env.serve(trace[0], 0)
        env.serve(trace[1], 0)
        out = env.serve(trace[2], 0)
        assert out.evicted_pages == (0,)

    def test_greedy_long_trace(self):
        rng = np.random.default_rng(0)
        trace = [_req(int(p)) for p in rng.integers(0, 12, 200)]
        oracle = run_trace(OraclePolicy(exact_limit=16), trace, _env(fast=4))
        slow = run_trace(SlowOnlyPolicy(), trace, _env(fast=4))
        assert oracle.avg_latency_ns < slow.avg_latency_ns
        assert oracle.fast_preference > 0.0

    def test_greedy_resident_stays_fast(self):
        trace = [_req(0), _req(0), _req(0)]
        policy = OraclePolicy(exact_limit=0)
        env = _env()
        policy.prepare(env, trace)
        env.serve(trace[0], 0)
        assert policy.decide(env, trace[1], trace[2]).action == 0

    def test_greedy_never_reused_stays_slow(self):
        trace = [_req(0), _req(1)]
        policy = OraclePolicy(exact_limit=0)
        env = _env()
        policy.prepare(env, trace)
        assert policy.decide(env, trace[0], trace[1]).action == 1


class TestMakePolicy:
    def test_names(self):
        assert isinstance(make_policy("cde"), CdePolicy)
        assert isinstance(make_policy(PolicyName.HPS, {"epoch": 50}), HpsPolicy)
        assert isinstance(make_policy("oracle", {"exact_limit": 4}), OraclePolicy)
        assert isinstance(make_policy("random", seed=2), RandomPolicy)
        assert isinstance(make_policy("tri-heuristic"), TriHeuristicPolicy)

    def test_params_applied(self):
        policy = make_policy("cde", {"hot_threshold": 2, "random_threshold": 16})
        assert (policy.hot_threshold, policy.random_threshold) == (2, 16)

    def test_unknown_name(self):
        with pytest.raises(PolicyError, match="unknown policy"):
            make_policy("lru")

    def test_unknown_param(self):
        with pytest.raises(PolicyError, match="bogus"):
            make_policy("cde", {"bogus": 1})

    def test_agent_not_built_here(self):
        with pytest.raises(PolicyError):
            make_policy("agent")
