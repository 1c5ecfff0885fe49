"""Analytic per-tier device latency model and datasheet presets.

Per-page latencies are derived once, at profile construction, as the slower
of the sequential-bandwidth cost and the random-IOPS cost of one 4 KiB page.
Rotational devices add a fixed seek penalty to every non-sequential access.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

from hsp_lib.errors import EnvError
from hsp_lib.types import NS_PER_SECOND, PAGE_SIZE, Op

MB = 1000 * 1000
GB = 1000 * MB


@dataclass(frozen=True)
class DeviceProfile:
    name: str
    capacity_pages: int
    read_latency_per_page: float  # ns
    write_latency_per_page: float  # ns
    seq_read_bandwidth: float  # bytes/s
    seq_write_bandwidth: float  # bytes/s
    seek_penalty: float = 0.0  # ns, charged on non-sequential access

    def __post_init__(self) -> None:
        if self.capacity_pages < 1:
            raise EnvError(f"tier '{self.name}': capacity must be >= 1 page")
        if self.read_latency_per_page <= 0 or self.write_latency_per_page <= 0:
            raise EnvError(f"tier '{self.name}': per-page latencies must be > 0")
        if self.seek_penalty < 0:
            raise EnvError(f"tier '{self.name}': seek penalty must be >= 0")

    @classmethod
    def from_datasheet(
        cls,
        name: str,
        capacity_pages: int,
        *,
        seq_read_bandwidth: float,
        seq_write_bandwidth: float,
        random_read_iops: float | None = None,
        random_write_iops: float | None = None,
        seek_penalty: float = 0.0,
    ) -> DeviceProfile:
        """Build a profile from sequential bandwidth and random IOPS figures."""

        def per_page(bandwidth: float, iops: float | None) -> float:
            streaming = PAGE_SIZE / bandwidth * NS_PER_SECOND
            if iops is None:
                return streaming
            return max(streaming, NS_PER_SECOND / iops)

        return cls(
            name=name,
            capacity_pages=capacity_pages,
            read_latency_per_page=per_page(seq_read_bandwidth, random_read_iops),
            write_latency_per_page=per_page(seq_write_bandwidth, random_write_iops),
            seq_read_bandwidth=seq_read_bandwidth,
            seq_write_bandwidth=seq_write_bandwidth,
            seek_penalty=seek_penalty,
        )

    def with_capacity(self, capacity_pages: int) -> DeviceProfile:
        return replace(self, capacity_pages=capacity_pages)

    def per_page_latency(self, op: Op) -> float:
        return self.read_latency_per_page if op == Op.READ else self.write_latency_per_page

    def to_dict(self) -> dict[str, str | int | float]:
        return asdict(self)


def device_latency(profile: DeviceProfile, op: Op, size_pages: int, sequential: bool) -> float:
    """Service time in ns of one request of ``size_pages`` on ``profile``."""
    if size_pages < 1:
        raise EnvError(f"request size must be >= 1 page, got {size_pages}")
    seek = 0.0 if sequential else profile.seek_penalty
    return seek + size_pages * profile.per_page_latency(op)


# ---------------------------------------------------------------------------
# Datasheet presets
# ---------------------------------------------------------------------------

# Capacities here are placeholders; experiment configs always size tiers
# relative to the workload's working set.
_PLACEHOLDER_CAPACITY = 1 << 30

PRESETS: dict[str, DeviceProfile] = {
    # Optane-class NVMe: 2.4/2 GB/s, 550K/500K random IOPS
    "H": DeviceProfile.from_datasheet(
        "H",
        _PLACEHOLDER_CAPACITY,
        seq_read_bandwidth=2.4 * GB,
        seq_write_bandwidth=2.0 * GB,
        random_read_iops=550_000,
        random_write_iops=500_000,
    ),
    # SATA TLC SSD: 550/510 MB/s, 895K/21K random IOPS
    "M": DeviceProfile.from_datasheet(
        "M",
        _PLACEHOLDER_CAPACITY,
        seq_read_bandwidth=550 * MB,
        seq_write_bandwidth=510 * MB,
        random_read_iops=895_000,
        random_write_iops=21_000,
    ),
    # 7200 rpm HDD: 210 MB/s sustained, 4 ms average positioning
    "L": DeviceProfile.from_datasheet(
        "L",
        _PLACEHOLDER_CAPACITY,
        seq_read_bandwidth=210 * MB,
        seq_write_bandwidth=210 * MB,
        seek_penalty=4_000_000.0,
    ),
    # low-end SATA TLC SSD: 520/450 MB/s
    "L_SSD": DeviceProfile.from_datasheet(
        "L_SSD",
        _PLACEHOLDER_CAPACITY,
        seq_read_bandwidth=520 * MB,
        seq_write_bandwidth=450 * MB,
    ),
}

# Named hybrid configurations, fastest tier first.
CONFIGURATIONS: dict[str, tuple[str, ...]] = {
    "H&M": ("H", "M"),  # performance-oriented
    "H&L": ("H", "L"),  # cost-oriented
    "H&L_SSD": ("H", "L_SSD"),
    "H&M&L": ("H", "M", "L"),  # tri-hybrid
}


def preset(name: str) -> DeviceProfile:
    try:
        return PRESETS[name]
    except KeyError:
        known = ", ".join(sorted(PRESETS))
        raise EnvError(f"unknown device preset '{name}' (known: {known})") from None
