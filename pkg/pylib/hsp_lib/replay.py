"""Fixed-capacity experience ring with compact records and uniform replay.

A packed experience is ``state | action << S | reward << (S + 4) |
next_state << (S + 20)`` where ``S`` is the packed state width (40 bits, or
48 in tri-hybrid mode) and the reward is an IEEE half-precision value: 100
bits in 13 bytes for dual-tier systems.

Inside the ring a record keeps only its own state, action and reward. Its
next state is shared with the state of the record pushed after it whenever
the two are equal, which is always the case for an unbroken decision stream;
only unlinked next states are kept separately.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from hsp_lib.errors import CodecError, ReplayNotFullError
from hsp_lib.features import state_bits
from hsp_lib.types import BATCH_SIZE, EXPERIENCE_BUFFER_SIZE, N_BATCHES

ACTION_BITS = 4
REWARD_BITS = 16


def record_bits(n_tiers: int = 2) -> int:
    return 2 * state_bits(n_tiers) + ACTION_BITS + REWARD_BITS


def record_bytes(n_tiers: int = 2) -> int:
    return (record_bits(n_tiers) + 7) // 8


def _half_bits(reward: float) -> int:
    return int(np.array(reward, dtype=np.float16).view(np.uint16))


def _half_value(bits: int) -> float:
    return float(np.array(bits, dtype=np.uint16).view(np.float16))


@dataclass(frozen=True, slots=True)
class Experience:
    state: int  # packed observation
    action: int
    reward: float  # stored at half precision
    next_state: int

    def pack(self, n_tiers: int = 2) -> bytes:
        sb = state_bits(n_tiers)
        if not 0 <= self.action < (1 << ACTION_BITS):
            raise CodecError(f"action {self.action} does not fit in {ACTION_BITS} bits")
        for s in (self.state, self.next_state):
            if s < 0 or s >> sb:
                raise CodecError(f"state {s:#x} does not fit in {sb} bits")
        code = (
            self.state
            | self.action << sb
            | _half_bits(self.reward) << (sb + ACTION_BITS)
            | self.next_state << (sb + ACTION_BITS + REWARD_BITS)
        )
        return code.to_bytes(record_bytes(n_tiers), "little")

    @classmethod
    def unpack(cls, data: bytes, n_tiers: int = 2) -> Experience:
        if len(data) != record_bytes(n_tiers):
            raise CodecError(f"expected {record_bytes(n_tiers)} bytes, got {len(data)}")
        code = int.from_bytes(data, "little")
        if code >> record_bits(n_tiers):
            raise CodecError("padding bits set in packed experience")
        sb = state_bits(n_tiers)
        mask = (1 << sb) - 1
        return cls(
            state=code & mask,
            action=(code >> sb) & ((1 << ACTION_BITS) - 1),
            reward=_half_value((code >> (sb + ACTION_BITS)) & 0xFFFF),
            next_state=(code >> (sb + ACTION_BITS + REWARD_BITS)) & mask,
        )


@dataclass(frozen=True)
class ExperienceBatch:
    indices: np.ndarray  # ring slots
    states: np.ndarray  # uint64 packed
    actions: np.ndarray  # int64
    rewards: np.ndarray  # float64 (from float16)
    next_states: np.ndarray  # uint64 packed

    def __len__(self) -> int:
        return int(self.indices.shape[0])

    def experiences(self) -> list[Experience]:
        return [
            Experience(int(s), int(a), float(r), int(n))
            for s, a, r, n in zip(self.states, self.actions, self.rewards, self.next_states)
        ]


class ExperienceBuffer:
    """FIFO ring of experiences; push and sample may run on different threads."""

    def __init__(self, capacity: int = EXPERIENCE_BUFFER_SIZE, *, n_tiers: int = 2):
        if capacity < 1:
            raise ValueError("experience buffer capacity must be >= 1")
        self.capacity = capacity
        self.n_tiers = n_tiers
        self._states = np.zeros(capacity, dtype=np.uint64)
        self._actions = np.zeros(capacity, dtype=np.uint8)
        self._rewards = np.zeros(capacity, dtype=np.float16)
        self._linked = np.zeros(capacity, dtype=np.bool_)
        self._unlinked_next: dict[int, int] = {}
        self._cursor = 0
        self._fill = 0
        self.total_pushes = 0
        self._lock = threading.Lock()

    @property
    def fill(self) -> int:
        return self._fill

    @property
    def is_full(self) -> bool:
        return self._fill == self.capacity

    def __len__(self) -> int:
        return self._fill

    def push(self, exp: Experience) -> None:
        with self._lock:
            slot = self._cursor
            if self._fill:
                prev = (slot - 1) % self.capacity
                if not self._linked[prev] and self._unlinked_next.get(prev) == exp.state:
                    self._linked[prev] = True
                    del self._unlinked_next[prev]
            self._linked[slot] = False
            self._states[slot] = exp.state
            self._actions[slot] = exp.action
            self._rewards[slot] = exp.reward
            self._unlinked_next[slot] = exp.next_state
            self._cursor = (slot + 1) % self.capacity
            self._fill = min(self._fill + 1, self.capacity)
            self.total_pushes += 1

    def _next_state(self, slot: int) -> int:
        if self._linked[slot]:
            return int(self._states[(slot + 1) % self.capacity])
        return self._unlinked_next[slot]

    def get(self, slot: int) -> Experience:
        """Record stored at ring ``slot``."""
        with self._lock:
            if not 0 <= slot < self._fill:
                raise IndexError(f"slot {slot} not filled ({self._fill} records)")
            return Experience(
                int(self._states[slot]),
                int(self._actions[slot]),
                float(self._rewards[slot]),
                self._next_state(slot),
            )

    def sample_batches(
        self,
        rng: np.random.Generator,
        n_batches: int = N_BATCHES,
        batch_size: int = BATCH_SIZE,
    ) -> list[ExperienceBatch]:
        """Draw ``n_batches`` uniform batches with replacement from a full ring."""
        with self._lock:
            if self._fill < self.capacity:
                raise ReplayNotFullError(self._fill, self.capacity)
            batches = []
            for _ in range(n_batches):
                idx = rng.integers(0, self.capacity, size=batch_size)
                next_states = self._states[(idx + 1) % self.capacity].copy()
                for j in np.flatnonzero(~self._linked[idx]):
                    next_states[j] = self._unlinked_next[int(idx[j])]
                batches.append(
                    ExperienceBatch(
                        indices=idx,
                        states=self._states[idx].copy(),
                        actions=self._actions[idx].astype(np.int64),
                        rewards=self._rewards[idx].astype(np.float64),
                        next_states=next_states,
                    )
                )
            return batches

    def packed_bytes(self) -> int:
        """Size of the ring if every record were stored in its packed form."""
        return self.capacity * record_bytes(self.n_tiers)

    def resident_bytes(self) -> int:
        """Bytes actually held by the ring, next-state sharing included."""
        with self._lock:
            return (
                self._states.nbytes
                + self._actions.nbytes
                + self._rewards.nbytes
                + (self.capacity + 7) // 8  # link bitmap
                + 8 * len(self._unlinked_next)
            )
