"""Shared enums and constants for the placement simulator."""

from __future__ import annotations

from enum import StrEnum


# ---------------------------------------------------------------------------
# Enums (StrEnum so config values and CSV cells compare as plain strings)
# ---------------------------------------------------------------------------


class Op(StrEnum):
    READ = "read"
    WRITE = "write"


class PolicyName(StrEnum):
    AGENT = "agent"
    CDE = "cde"
    HPS = "hps"
    ORACLE = "oracle"
    FAST_ONLY = "fast-only"
    SLOW_ONLY = "slow-only"
    RANDOM = "random"
    TRI_HEURISTIC = "tri-heuristic"


class ExecMode(StrEnum):
    DETERMINISTIC = "deterministic"
    THREADED = "threaded"


# ---------------------------------------------------------------------------
# Storage geometry
# ---------------------------------------------------------------------------

PAGE_SIZE = 4096  # bytes; placement granularity
MSRC_TICK_NS = 100  # MSRC timestamps count 100 ns ticks
NS_PER_SECOND = 1_000_000_000

# ---------------------------------------------------------------------------
# Learning cadence defaults
# ---------------------------------------------------------------------------

EXPERIENCE_BUFFER_SIZE = 1000
SYNC_INTERVAL = 1000  # requests between training round + weight sync
N_BATCHES = 8
BATCH_SIZE = 128
