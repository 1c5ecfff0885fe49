"""Hybrid storage system state: placement, eviction, promotion, page metadata.

The simulator is request-clocked: every ``serve`` call is one time-step.
Tiers are ordered fastest first. Capacity pressure on a tier evicts its
least-recently-used pages (or the pages a custom victim selector picks) to
the next-slower tier; the slowest tier must be able to hold the working set.
"""

from __future__ import annotations

import copy
import heapq
from collections import Counter
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass
from typing import Any

from hsp_lib.devices import DeviceProfile, device_latency
from hsp_lib.errors import CapacityExhaustedError, EnvError
from hsp_lib.trace import StorageRequest
from hsp_lib.types import Op

# (state, tier, pages that must not be evicted) -> victim page or None
VictimSelector = Callable[["HssState", int, frozenset[int]], int | None]


@dataclass(frozen=True)
class ServiceOutcome:
    latency_ns: float  # L_t
    evicted_pages: tuple[int, ...]
    eviction_latency_ns: float  # L_e, background
    promoted: bool
    tier: int

    @property
    def evicted(self) -> bool:
        return bool(self.evicted_pages)


@dataclass(frozen=True)
class RawFeatures:
    """Per-request state snapshot taken before the request is served."""

    size_pages: int
    op: Op
    access_interval: int | None  # None = never seen
    access_count: int
    fast_remaining_fraction: float
    current_tier: int | None  # None = unplaced
    n_tiers: int
    middle_remaining_fraction: float | None = None  # tri-hybrid only


class HssState:
    """Live page-to-tier mapping plus the per-page metadata features need."""

    def __init__(
        self,
        tiers: Sequence[DeviceProfile],
        *,
        charge_migration_read: bool = True,
        victim_selector: VictimSelector | None = None,
    ):
        if not 2 <= len(tiers) <= 3:
            raise EnvError(f"expected 2 or 3 tiers, got {len(tiers)}")
        self.tiers: tuple[DeviceProfile, ...] = tuple(tiers)
        self.charge_migration_read = charge_migration_read
        self.victim_selector = victim_selector

        self.page_map: dict[int, int] = {}
        self.access_count: dict[int, int] = {}
        self.last_access: dict[int, int] = {}
        self.request_step = 0

        self._residents: list[set[int]] = [set() for _ in self.tiers]
        # lazy min-heaps of (last_access_step, page); stale entries skipped
        self._lru: list[list[tuple[int, int]]] = [[] for _ in self.tiers]
        self._last_end: list[int | None] = [None for _ in self.tiers]

        self.evictions = 0
        self.promotions = 0
        self.demotions = 0
        self.background_latency_ns = 0.0

    # -- capacity -----------------------------------------------------------

    @property
    def n_tiers(self) -> int:
        return len(self.tiers)

    @property
    def slowest(self) -> int:
        return len(self.tiers) - 1

    def residents(self, tier: int) -> frozenset[int]:
        return frozenset(self._residents[tier])

    def resident_count(self, tier: int) -> int:
        return len(self._residents[tier])

    def remaining_capacity(self, tier: int) -> int:
        return self.tiers[tier].capacity_pages - len(self._residents[tier])

    # -- LRU bookkeeping ----------------------------------------------------

    def _touch_lru(self, tier: int, page: int) -> None:
        heap = self._lru[tier]
        heapq.heappush(heap, (self.last_access.get(page, -1), page))
        if len(heap) > 4 * len(self._residents[tier]) + 64:
            self._lru[tier] = [
                (self.last_access.get(p, -1), p) for p in self._residents[tier]
            ]
            heapq.heapify(self._lru[tier])

    def lru_victim(self, tier: int, exclude: frozenset[int] = frozenset()) -> int | None:
        """Resident of ``tier`` with the oldest last access, skipping ``exclude``."""
        heap = self._lru[tier]
        skipped: list[tuple[int, int]] = []
        victim = None
        while heap:
            step, page = heap[0]
            if self.page_map.get(page) != tier or self.last_access.get(page, -1) != step:
                heapq.heappop(heap)
                continue
            if page in exclude:
                skipped.append(heapq.heappop(heap))
                continue
            victim = page
            break
        for entry in skipped:
            heapq.heappush(heap, entry)
        return victim

    def _select_victim(self, tier: int, exclude: frozenset[int]) -> int | None:
        if self.victim_selector is not None:
            return self.victim_selector(self, tier, exclude)
        return self.lru_victim(tier, exclude)

    # -- placement primitives ----------------------------------------------

    def _place(self, page: int, tier: int) -> None:
        old = self.page_map.get(page)
        if old is not None:
            self._residents[old].discard(page)
        self.page_map[page] = tier
        self._residents[tier].add(page)
        self._touch_lru(tier, page)

    def _is_sequential(self, tier: int, first_page: int) -> bool:
        return self._last_end[tier] == first_page

    def _evict_one(self, page: int, src: int, exclude: frozenset[int], out: list[int]) -> float:
        """Move ``page`` from ``src`` to the next-slower tier; returns L_e."""
        dst = src + 1
        if dst >= self.n_tiers:
            raise CapacityExhaustedError(self.tiers[src].name)
        cost = self._make_room(dst, 1, exclude, out)
        self._place(page, dst)
        out.append(page)
        self.evictions += 1
        return (
            cost
            + device_latency(self.tiers[src], Op.READ, 1, sequential=False)
            + device_latency(self.tiers[dst], Op.WRITE, 1, sequential=False)
        )

    def _make_room(self, tier: int, needed: int, exclude: frozenset[int], out: list[int]) -> float:
        """Evict until ``tier`` has ``needed`` free pages or nothing is evictable."""
        cost = 0.0
        while self.remaining_capacity(tier) < needed:
            victim = self._select_victim(tier, exclude)
            if victim is None:
                if tier == self.slowest:
                    raise CapacityExhaustedError(self.tiers[tier].name)
                break
            cost += self._evict_one(victim, tier, exclude, out)
        return cost

    # -- operations ---------------------------------------------------------

    def serve(self, request: StorageRequest, action: int) -> ServiceOutcome:
        """Serve ``request`` with its pages placed on tier ``action``."""
        if not 0 <= action < self.n_tiers:
            raise EnvError(f"action tier {action} out of range for {self.n_tiers} tiers")

        target = action
        tier_dev = self.tiers[target]
        step = self.request_step
        covered = list(request.pages)
        exclude = frozenset(covered)

        on_target = 0
        unplaced: list[int] = []
        moved: dict[int, list[int]] = {}
        for p in covered:
            where = self.page_map.get(p)
            if where is None:
                unplaced.append(p)
            elif where == target:
                on_target += 1
            else:
                moved.setdefault(where, []).append(p)

        seq_target = self._is_sequential(target, request.page)
        latency = 0.0
        if request.op == Op.WRITE:
            latency = device_latency(tier_dev, Op.WRITE, len(covered), seq_target)
        else:
            served_here = on_target + len(unplaced)
            if served_here:
                latency += device_latency(tier_dev, Op.READ, served_here, seq_target)
            migrated = sum(len(ps) for ps in moved.values())
            if migrated:
                if self.charge_migration_read:
                    for src, ps in moved.items():
                        latency += device_latency(
                            self.tiers[src], Op.READ, len(ps), self._is_sequential(src, ps[0])
                        )
                latency += device_latency(
                    tier_dev, Op.WRITE, migrated, seq_target and not served_here
                )

        promoted = any(src > target for src in moved)
        demoted = any(src < target for src in moved)

        # stale copies leave their source tiers before room is made
        incoming = unplaced + [p for ps in moved.values() for p in ps]
        for src, ps in moved.items():
            for p in ps:
                self._residents[src].discard(p)
                del self.page_map[p]
            self._last_end[src] = ps[-1] + 1

        evicted: list[int] = []
        eviction_latency = self._make_room(target, len(incoming), exclude, evicted)
        fit = max(0, min(len(incoming), self.remaining_capacity(target)))
        for p in incoming[:fit]:
            self._place(p, target)
        # pages that cannot fit even after evicting everything else spill over
        for p in incoming[fit:]:
            dst = target + 1
            if dst >= self.n_tiers:
                raise CapacityExhaustedError(tier_dev.name)
            eviction_latency += self._make_room(dst, 1, exclude, evicted)
            self._place(p, dst)
            evicted.append(p)
            self.evictions += 1
            eviction_latency += device_latency(self.tiers[dst], Op.WRITE, 1, sequential=False)

        for p in covered:
            self.access_count[p] = self.access_count.get(p, 0) + 1
            self.last_access[p] = step
            self._touch_lru(self.page_map[p], p)

        self._last_end[target] = request.end_page
        self.request_step += 1
        if promoted:
            self.promotions += 1
        if demoted:
            self.demotions += 1
        self.background_latency_ns += eviction_latency

        return ServiceOutcome(
            latency_ns=latency,
            evicted_pages=tuple(evicted),
            eviction_latency_ns=eviction_latency,
            promoted=promoted,
            tier=target,
        )

    def demote(self, pages: Iterable[int]) -> float:
        """Background-migrate resident pages one tier down; returns the cost in ns."""
        cost = 0.0
        moved: list[int] = []
        for p in pages:
            src = self.page_map.get(p)
            if src is None or src == self.slowest:
                continue
            dst = src + 1
            cost += self._make_room(dst, 1, frozenset((p,)), moved)
            self._place(p, dst)
            self.demotions += 1
            cost += device_latency(self.tiers[src], Op.READ, 1, sequential=False)
            cost += device_latency(self.tiers[dst], Op.WRITE, 1, sequential=False)
        self.background_latency_ns += cost
        return cost

    def snapshot_features(self, request: StorageRequest) -> RawFeatures:
        """Raw features of ``request`` against the current (pre-serve) state."""
        page = request.page
        last = self.last_access.get(page)
        fast = self.tiers[0]
        middle = None
        if self.n_tiers == 3:
            middle = self.remaining_capacity(1) / self.tiers[1].capacity_pages
        return RawFeatures(
            size_pages=request.size_pages,
            op=request.op,
            access_interval=None if last is None else self.request_step - last,
            access_count=self.access_count.get(page, 0),
            fast_remaining_fraction=self.remaining_capacity(0) / fast.capacity_pages,
            current_tier=self.page_map.get(page),
            n_tiers=self.n_tiers,
            middle_remaining_fraction=middle,
        )

    # -- inspection ---------------------------------------------------------

    def clone(self) -> HssState:
        """Deep copy; the victim selector is shared, not copied."""
        memo: dict[int, Any] = {}
        if self.victim_selector is not None:
            memo[id(self.victim_selector)] = self.victim_selector
        return copy.deepcopy(self, memo)

    def fingerprint(self) -> tuple[Any, ...]:
        """Everything that influences future latencies, for memoised search."""
        return (
            self.request_step,
            frozenset(self.page_map.items()),
            tuple(self._last_end),
        )

    def dump_state(self) -> dict[str, Any]:
        """JSON-ready summary of residency and migration counters."""
        histogram = Counter(self.page_map.values())
        return {
            "request_step": self.request_step,
            "tiers": [
                {
                    "name": dev.name,
                    "capacity_pages": dev.capacity_pages,
                    "resident_pages": len(self._residents[t]),
                    "remaining_pages": self.remaining_capacity(t),
                }
                for t, dev in enumerate(self.tiers)
            ],
            "page_map_histogram": {self.tiers[t].name: histogram.get(t, 0) for t in range(self.n_tiers)},
            "evictions": self.evictions,
            "promotions": self.promotions,
            "demotions": self.demotions,
            "background_latency_ns": self.background_latency_ns,
        }
