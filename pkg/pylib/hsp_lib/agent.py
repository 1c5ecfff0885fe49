"""The learning placement agent: observe, act, serve, reward, store, train.

Every request is one decision. The experience for request ``t`` needs the
observation at request ``t + 1``; when the caller passes the upcoming
request the experience is completed immediately, otherwise it is held and
completed by the next ``step``. At the end of a trace the last experience
is completed with the final request observed against the final storage
state, so a trace of ``sync_interval`` requests fills the buffer and trains
once.

Every ``sync_interval`` requests, once the replay buffer is full, the agent
runs one training round (``n_batches`` SGD steps) and copies the training
weights to the inference network. In threaded mode rounds run on a single
background worker while decisions continue with the previous weights.
"""

from __future__ import annotations

import concurrent.futures
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from hsp_lib.baselines import PlacementPolicy
from hsp_lib.c51 import REWARD_MAX, Hyperparams, epsilon_greedy, sync_weights, train_round
from hsp_lib.devices import DeviceProfile, device_latency
from hsp_lib.errors import ConfigError
from hsp_lib.features import n_features, normalize, observe, pack, unpack
from hsp_lib.hssenv import HssState, ServiceOutcome
from hsp_lib.replay import Experience, ExperienceBuffer
from hsp_lib.simulate import Decision, MetricsReport, run_trace
from hsp_lib.trace import StorageRequest
from hsp_lib.types import ExecMode, Op, PolicyName


@dataclass(frozen=True)
class RewardParams:
    fast_ref_latency_ns: float  # L_fast_ref
    eviction_penalty: float = 0.001  # k_p

    def __post_init__(self) -> None:
        if self.eviction_penalty < 0:
            raise ConfigError("must be >= 0", "reward.eviction-penalty")
        if not self.fast_ref_latency_ns > 0:
            raise ConfigError("must be > 0", "reward.fast-ref-latency")

    @classmethod
    def for_tiers(cls, tiers: Sequence[DeviceProfile], eviction_penalty: float = 0.001) -> RewardParams:
        """Anchor the reward at one random single-page read on the fast tier."""
        ref = device_latency(tiers[0], Op.READ, 1, sequential=False)
        return cls(fast_ref_latency_ns=ref, eviction_penalty=eviction_penalty)


def compute_reward(outcome: ServiceOutcome, params: RewardParams) -> float:
    """Latency-normalised reward with an eviction penalty, at half precision."""
    ref = params.fast_ref_latency_ns
    reward = ref / outcome.latency_ns
    if outcome.evicted:
        reward = max(0.0, reward - params.eviction_penalty * outcome.eviction_latency_ns / ref)
    reward = min(max(reward, 0.0), REWARD_MAX)
    return float(np.float16(reward))


@dataclass(frozen=True)
class StepResult:
    action: int
    outcome: ServiceOutcome
    reward: float
    explored: bool
    state: int  # packed observation the action was chosen on


@dataclass
class _Pending:
    state: int
    action: int
    reward: float


@dataclass
class TrainingLog:
    losses: list[float] = field(default_factory=list)


class PlacementAgent(PlacementPolicy):
    name = PolicyName.AGENT

    def __init__(
        self,
        tiers: Sequence[DeviceProfile],
        *,
        hyperparams: Hyperparams | None = None,
        eviction_penalty: float = 0.001,
        seed: int = 0,
        mode: ExecMode = ExecMode.DETERMINISTIC,
        charge_migration_read: bool = True,
    ):
        self.hp = hyperparams or Hyperparams()
        self.seed = seed
        self.mode = ExecMode(mode)
        self.env = HssState(tiers, charge_migration_read=charge_migration_read)
        self.n_tiers = self.env.n_tiers
        self.reward_params = RewardParams.for_tiers(tiers, eviction_penalty)

        n_inputs = n_features(self.n_tiers)
        self.training = self.hp.build_network(n_inputs, self.n_tiers, seed=seed)
        self.inference = self.hp.build_network(n_inputs, self.n_tiers, seed=seed + 1)
        self.buffer = ExperienceBuffer(self.hp.buffer_size, n_tiers=self.n_tiers)

        self._act_rng = np.random.default_rng([seed, 0])
        self._train_rng = np.random.default_rng([seed, 1])
        self._pending: _Pending | None = None
        self._lookahead: tuple[StorageRequest, int] | None = None
        self._last_request: StorageRequest | None = None
        self._last_state = 0
        self._last_reward = 0.0
        self._executor: concurrent.futures.ThreadPoolExecutor | None = None
        self._inflight: concurrent.futures.Future[None] | None = None

        self.steps = 0
        self.explored = 0
        self.training_rounds = 0
        self.weight_syncs = 0
        self.log = TrainingLog()

    # -- observation ----------------------------------------------------------

    def observe_state(self, request: StorageRequest) -> int:
        """Packed observation of ``request`` against the current storage state."""
        if self._lookahead is not None and self._lookahead[0] is request:
            return self._lookahead[1]
        return pack(observe(self.env.snapshot_features(request)))

    def q_values(self, state: int) -> np.ndarray:
        _, q = self.inference.forward(normalize(unpack(state, self.n_tiers)))
        return q

    # -- policy interface -----------------------------------------------------

    def decide(self, env, request, upcoming) -> Decision:
        state = self.observe_state(request)
        if self._pending is not None:
            self._push(self._pending, state)
            self._pending = None
        action, explored = epsilon_greedy(self.q_values(state), self.hp.epsilon, self._act_rng)
        self._last_state = state
        return Decision(action, explored)

    def observe(self, env, request, decision, outcome, upcoming) -> None:
        reward = compute_reward(outcome, self.reward_params)
        self._last_reward = reward
        self._last_request = request
        self.steps += 1
        self.explored += decision.explored
        pending = _Pending(self._last_state, decision.action, reward)
        self._lookahead = None
        if upcoming is not None:
            next_state = pack(observe(self.env.snapshot_features(upcoming)))
            self._lookahead = (upcoming, next_state)
            self._push(pending, next_state)
        else:
            self._pending = pending
        self._maybe_train()

    def finish(self, env) -> None:
        if self._pending is not None and self._last_request is not None:
            terminal = pack(observe(self.env.snapshot_features(self._last_request)))
            self._push(self._pending, terminal)
        self._pending = None
        self._lookahead = None
        self.drain()

    # -- stepping -------------------------------------------------------------

    def step(self, request: StorageRequest, upcoming: StorageRequest | None = None) -> StepResult:
        """Serve one request with the agent's placement decision."""
        decision = self.decide(self.env, request, upcoming)
        state = self._last_state
        outcome = self.env.serve(request, decision.action)
        self.observe(self.env, request, decision, outcome, upcoming)
        return StepResult(decision.action, outcome, self._last_reward, decision.explored, state)

    def run(
        self,
        trace: Sequence[StorageRequest],
        *,
        workload: str = "",
        progress: Callable[[int], None] | None = None,
    ) -> MetricsReport:
        try:
            return run_trace(self, trace, self.env, workload=workload, progress=progress)
        finally:
            self.close()

    # -- training -------------------------------------------------------------

    def _push(self, pending: _Pending, next_state: int) -> None:
        self.buffer.push(Experience(pending.state, pending.action, pending.reward, next_state))

    def _rounds_due(self) -> int:
        return self.steps // self.hp.sync_interval - self.training_rounds

    def _train_and_sync(self) -> None:
        loss = train_round(self.training, self.inference, self.buffer, self.hp, self._train_rng)
        sync_weights(self.training, self.inference)
        self.log.losses.append(loss)
        self.training_rounds += 1
        self.weight_syncs += 1

    def _maybe_train(self) -> None:
        if self._rounds_due() <= 0 or not self.buffer.is_full:
            return
        if self.mode == ExecMode.DETERMINISTIC:
            self._train_and_sync()
            return
        if self._inflight is not None:
            if not self._inflight.done():
                return
            self._inflight.result()
        if self._executor is None:
            self._executor = concurrent.futures.ThreadPoolExecutor(
                max_workers=1, thread_name_prefix="hsp-train"
            )
        self._inflight = self._executor.submit(self._train_and_sync)

    def drain(self) -> None:
        """Wait for background training, then run any rounds still owed."""
        if self._inflight is not None:
            self._inflight.result()
            self._inflight = None
        while self._rounds_due() > 0 and self.buffer.is_full:
            self._train_and_sync()

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None
