"""Reference placement policies sharing the simulator interface.

Every policy implements ``decide``; the other hooks are optional. Policies
only read ``HssState`` in ``decide`` and may mutate it (background
migrations, victim selection) through ``prepare`` and ``observe``.
"""

from __future__ import annotations

import bisect
from abc import ABC, abstractmethod
from collections import Counter, defaultdict
from collections.abc import Sequence

import numpy as np

from hsp_lib.errors import PolicyError
from hsp_lib.hssenv import HssState, ServiceOutcome
from hsp_lib.simulate import Decision
from hsp_lib.trace import StorageRequest
from hsp_lib.types import Op, PolicyName

DEFAULT_HOT_THRESHOLD = 4  # accesses
DEFAULT_RANDOM_THRESHOLD = 8  # pages
DEFAULT_EPOCH = 1000  # requests
DEFAULT_EXACT_LIMIT = 16  # requests

INFINITY = float("inf")


class PlacementPolicy(ABC):
    name: str = ""

    def prepare(self, env: HssState, trace: Sequence[StorageRequest]) -> None:
        """Called once before the first request."""

    @abstractmethod
    def decide(
        self, env: HssState, request: StorageRequest, upcoming: StorageRequest | None
    ) -> Decision: ...

    def observe(
        self,
        env: HssState,
        request: StorageRequest,
        decision: Decision,
        outcome: ServiceOutcome,
        upcoming: StorageRequest | None,
    ) -> None:
        """Called after ``request`` has been served."""

    def finish(self, env: HssState) -> None:
        """Called once after the last request."""


class _SequentialTracker:
    """Remembers where the previous request ended."""

    def __init__(self, random_threshold: int):
        self.random_threshold = random_threshold
        self._prev_end: int | None = None

    def is_sequential(self, request: StorageRequest) -> bool:
        return request.size_pages > self.random_threshold or request.page == self._prev_end

    def update(self, request: StorageRequest) -> None:
        self._prev_end = request.end_page


# ---------------------------------------------------------------------------
# Degenerate and control policies
# ---------------------------------------------------------------------------


class FastOnlyPolicy(PlacementPolicy):
    name = PolicyName.FAST_ONLY

    def prepare(self, env: HssState, trace: Sequence[StorageRequest]) -> None:
        working_set = len({p for r in trace for p in r.pages})
        if env.tiers[0].capacity_pages < working_set:
            raise PolicyError(
                f"fast-only needs the fast tier to hold the working set "
                f"({env.tiers[0].capacity_pages} < {working_set} pages)"
            )

    def decide(self, env, request, upcoming) -> Decision:
        return Decision(0)


class SlowOnlyPolicy(PlacementPolicy):
    name = PolicyName.SLOW_ONLY

    def decide(self, env, request, upcoming) -> Decision:
        return Decision(env.slowest)


class RandomPolicy(PlacementPolicy):
    name = PolicyName.RANDOM

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._rng = np.random.default_rng(seed)

    def prepare(self, env: HssState, trace: Sequence[StorageRequest]) -> None:
        self._rng = np.random.default_rng(self.seed)

    def decide(self, env, request, upcoming) -> Decision:
        return Decision(int(self._rng.integers(0, env.n_tiers)))


# ---------------------------------------------------------------------------
# Heuristics
# ---------------------------------------------------------------------------


class CdePolicy(PlacementPolicy):
    """Hot or random writes go fast; cold sequential writes go slow.

    Reads stay where the data lives unless the page is hot, in which case it
    is promoted to the fast tier.
    """

    name = PolicyName.CDE

    def __init__(
        self,
        hot_threshold: int = DEFAULT_HOT_THRESHOLD,
        random_threshold: int = DEFAULT_RANDOM_THRESHOLD,
    ):
        if hot_threshold < 1 or random_threshold < 1:
            raise PolicyError("cde thresholds must be >= 1")
        self.hot_threshold = hot_threshold
        self.random_threshold = random_threshold

    def decide(self, env, request, upcoming) -> Decision:
        hot = env.access_count.get(request.page, 0) >= self.hot_threshold
        if request.op == Op.WRITE:
            random_write = request.size_pages <= self.random_threshold
            return Decision(0 if hot or random_write else env.slowest)
        if hot:
            return Decision(0)
        current = env.page_map.get(request.page)
        return Decision(env.slowest if current is None else current)


class HpsPolicy(PlacementPolicy):
    """Fill the fast tier first; demote below-median pages every epoch."""

    name = PolicyName.HPS

    def __init__(self, epoch: int = DEFAULT_EPOCH):
        if epoch < 1:
            raise PolicyError("hps epoch must be >= 1 request")
        self.epoch = epoch
        self.epoch_counts: Counter[int] = Counter()
        self.epochs_completed = 0

    def prepare(self, env: HssState, trace: Sequence[StorageRequest]) -> None:
        self.epoch_counts.clear()
        self.epochs_completed = 0

    def decide(self, env, request, upcoming) -> Decision:
        current = env.page_map.get(request.page)
        if current == 0 or env.remaining_capacity(0) >= request.size_pages:
            return Decision(0)
        return Decision(env.slowest if current is None else current)

    def cold_pages(self, env: HssState) -> list[int]:
        """Fast residents whose epoch count is strictly below the median."""
        residents = sorted(env.residents(0))
        if not residents:
            return []
        counts = [self.epoch_counts.get(p, 0) for p in residents]
        median = float(np.median(counts))
        return [p for p, c in zip(residents, counts) if c < median]

    def observe(self, env, request, decision, outcome, upcoming) -> None:
        self.epoch_counts.update(request.pages)
        if env.request_step % self.epoch == 0:
            env.demote(self.cold_pages(env))
            self.epoch_counts.clear()
            self.epochs_completed += 1


class TriHeuristicPolicy(PlacementPolicy):
    """Hot data to H, cold to M, frozen (new and sequential) to L."""

    name = PolicyName.TRI_HEURISTIC

    def __init__(
        self,
        hot_threshold: int = DEFAULT_HOT_THRESHOLD,
        random_threshold: int = DEFAULT_RANDOM_THRESHOLD,
    ):
        self.hot_threshold = hot_threshold
        self._seq = _SequentialTracker(random_threshold)

    def prepare(self, env: HssState, trace: Sequence[StorageRequest]) -> None:
        if env.n_tiers != 3:
            raise PolicyError(f"tri-heuristic needs 3 tiers, got {env.n_tiers}")
        self._seq = _SequentialTracker(self._seq.random_threshold)

    def decide(self, env, request, upcoming) -> Decision:
        count = env.access_count.get(request.page, 0)
        if count >= self.hot_threshold:
            return Decision(0)
        if count == 0 and self._seq.is_sequential(request):
            return Decision(2)
        return Decision(1)

    def observe(self, env, request, decision, outcome, upcoming) -> None:
        self._seq.update(request)


# ---------------------------------------------------------------------------
# Clairvoyant oracle
# ---------------------------------------------------------------------------


class OracleIndex:
    """Future access steps of every page in a trace."""

    def __init__(self, trace: Sequence[StorageRequest]):
        steps: defaultdict[int, list[int]] = defaultdict(list)
        for i, request in enumerate(trace):
            for p in request.pages:
                steps[p].append(i)
        self._steps = dict(steps)

    def next_access(self, page: int, step: int) -> float:
        """First step after ``step`` touching ``page``; ``inf`` if none."""
        steps = self._steps.get(page)
        if not steps:
            return INFINITY
        i = bisect.bisect_right(steps, step)
        return steps[i] if i < len(steps) else INFINITY

    def next_request_access(self, request: StorageRequest, step: int) -> float:
        return min(self.next_access(p, step) for p in request.pages)


class OraclePolicy(PlacementPolicy):
    """Clairvoyant placement with Belady eviction.

    Traces of at most ``exact_limit`` requests are planned exhaustively
    (memoised over simulator states); longer traces use a greedy rule: a
    request goes to the fastest tier that has room, or whose farthest-reused
    resident is needed later than this request.
    """

    name = PolicyName.ORACLE

    def __init__(self, exact_limit: int = DEFAULT_EXACT_LIMIT):
        self.exact_limit = exact_limit
        self.index = OracleIndex(())
        self._plan: list[int] | None = None

    def belady_victim(self, env: HssState, tier: int, exclude: frozenset[int]) -> int | None:
        step = env.request_step
        best: tuple[float, int] | None = None
        for p in env.residents(tier):
            if p in exclude:
                continue
            key = (self.index.next_access(p, step), -p)
            if best is None or key > best:
                best = key
        return None if best is None else -best[1]

    def prepare(self, env: HssState, trace: Sequence[StorageRequest]) -> None:
        self.index = OracleIndex(trace)
        env.victim_selector = self.belady_victim
        self._plan = None
        if len(trace) <= self.exact_limit:
            _, self._plan = plan_exact(env, trace)

    def decide(self, env, request, upcoming) -> Decision:
        if self._plan is not None:
            return Decision(self._plan[env.request_step])
        step = env.request_step
        needed = self.index.next_request_access(request, step)
        current = env.page_map.get(request.page)
        if current == 0:
            return Decision(0)
        if needed == INFINITY:
            return Decision(env.slowest if current is None else current)
        for tier in range(env.slowest):
            if env.remaining_capacity(tier) >= request.size_pages:
                return Decision(tier)
            farthest = max(
                (self.index.next_access(p, step) for p in env.residents(tier)),
                default=INFINITY,
            )
            if needed < farthest:
                return Decision(tier)
        return Decision(env.slowest)

    def finish(self, env: HssState) -> None:
        env.victim_selector = None


def plan_exact(env: HssState, trace: Sequence[StorageRequest]) -> tuple[float, list[int]]:
    """Minimum total service latency over all action sequences, and one argmin.

    Ties prefer the faster tier at the earliest step.
    """
    memo: dict[tuple, tuple[float, tuple[int, ...]]] = {}

    def search(state: HssState, i: int) -> tuple[float, tuple[int, ...]]:
        if i == len(trace):
            return 0.0, ()
        key = state.fingerprint()
        if key in memo:
            return memo[key]
        best: tuple[float, tuple[int, ...]] | None = None
        for action in range(state.n_tiers):
            child = state.clone()
            outcome = child.serve(trace[i], action)
            rest, actions = search(child, i + 1)
            total = outcome.latency_ns + rest
            if best is None or total < best[0]:
                best = (total, (action, *actions))
        assert best is not None
        memo[key] = best
        return best

    cost, actions = search(env.clone(), 0)
    return cost, list(actions)


def make_policy(
    name: str | PolicyName,
    params: dict[str, int | float] | None = None,
    *,
    seed: int = 0,
) -> PlacementPolicy:
    """Build a baseline policy from its config name and parameters."""
    params = dict(params or {})

    def take(key: str, default: int) -> int:
        return int(params.pop(key, default))

    try:
        kind = PolicyName(name)
    except ValueError:
        known = ", ".join(p.value for p in PolicyName)
        raise PolicyError(f"unknown policy '{name}' (known: {known})") from None

    match kind:
        case PolicyName.CDE:
            policy: PlacementPolicy = CdePolicy(
                take("hot_threshold", DEFAULT_HOT_THRESHOLD),
                take("random_threshold", DEFAULT_RANDOM_THRESHOLD),
            )
        case PolicyName.HPS:
            policy = HpsPolicy(take("epoch", DEFAULT_EPOCH))
        case PolicyName.ORACLE:
            policy = OraclePolicy(take("exact_limit", DEFAULT_EXACT_LIMIT))
        case PolicyName.FAST_ONLY:
            policy = FastOnlyPolicy()
        case PolicyName.SLOW_ONLY:
            policy = SlowOnlyPolicy()
        case PolicyName.RANDOM:
            policy = RandomPolicy(seed)
        case PolicyName.TRI_HEURISTIC:
            policy = TriHeuristicPolicy(
                take("hot_threshold", DEFAULT_HOT_THRESHOLD),
                take("random_threshold", DEFAULT_RANDOM_THRESHOLD),
            )
        case PolicyName.AGENT:
            raise PolicyError("the agent is built by hsp_lib.agent, not make_policy")
    if params:
        raise PolicyError(f"unknown {name} parameter(s): {', '.join(sorted(params))}")
    return policy
