"""Per-module error types.

Every error raised by hsp_lib derives from ``HspError``. Errors caused by
bad input also derive from ``ValueError``.
"""

from __future__ import annotations

from pathlib import Path


class HspError(Exception):
    """Base class for every hsp_lib error."""


class TraceError(HspError, ValueError):
    """A trace or synthetic workload spec is unusable."""


class TraceParseError(TraceError):
    def __init__(self, line_no: int, message: str, source: Path | str | None = None):
        self.line_no = line_no
        self.source = str(source) if source is not None else None
        where = f"{self.source}:{line_no}" if self.source else f"line {line_no}"
        super().__init__(f"{where}: {message}")


class EnvError(HspError, ValueError):
    """Invalid request against the storage model (bad tier, bad profile)."""


class CapacityExhaustedError(EnvError):
    def __init__(self, tier: str):
        self.tier = tier
        super().__init__(f"capacity exhausted: cannot evict from slowest tier '{tier}'")


class CodecError(HspError, ValueError):
    """A packed observation or experience does not decode to valid bins."""


class ReplayNotFullError(HspError):
    def __init__(self, fill: int, capacity: int):
        self.fill = fill
        self.capacity = capacity
        super().__init__(f"experience buffer not full ({fill}/{capacity})")


class NetworkShapeError(HspError, ValueError):
    """Two networks (or a checkpoint and a network) have different shapes."""


class TrainingDivergedError(HspError):
    """Training produced a non-finite loss."""


class PolicyError(HspError, ValueError):
    """A placement policy was misconfigured for the environment."""


class ConfigError(HspError, ValueError):
    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class NothingToDoError(ConfigError):
    """The input selects no work (empty trace, empty grid)."""
