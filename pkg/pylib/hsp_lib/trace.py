"""Block-I/O trace ingestion, synthetic workloads, and workload statistics.

MSRC traces are CSV lines of the form::

    Timestamp,Hostname,DiskNumber,Type,Offset,Size,ResponseTime

Timestamps are Windows filetime ticks (100 ns); Offset and Size are bytes.
Requests are converted to 4 KiB logical pages and rebased so the first
request arrives at t=0 (nanoseconds).
"""

from __future__ import annotations

import heapq
import math
from collections import Counter
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from parsy import ParseError, regex, seq, string

from hsp_lib.errors import TraceError, TraceParseError
from hsp_lib.types import MSRC_TICK_NS, PAGE_SIZE, Op


# ---------------------------------------------------------------------------
# Data classes
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class StorageRequest:
    timestamp: int  # ns since trace epoch
    op: Op
    page: int  # first 4 KiB logical page
    size_pages: int
    workload_id: int = 0

    def __post_init__(self) -> None:
        if self.size_pages < 1:
            raise TraceError(f"size_pages must be >= 1, got {self.size_pages}")

    @property
    def pages(self) -> range:
        return range(self.page, self.page + self.size_pages)

    @property
    def end_page(self) -> int:
        """One past the last covered page."""
        return self.page + self.size_pages


@dataclass(frozen=True)
class WorkloadStats:
    n_requests: int
    write_fraction: float
    read_fraction: float
    avg_request_size_pages: float
    avg_access_count: float
    unique_pages: int

    @property
    def is_write_intensive(self) -> bool:
        return self.write_fraction >= 0.5

    def to_dict(self) -> dict[str, float | int | bool]:
        d: dict[str, float | int | bool] = asdict(self)
        d["is_write_intensive"] = self.is_write_intensive
        return d


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters for ``gen_synthetic``.

    ``request_size_dist`` maps a request size in pages to its weight.
    ``scan_fraction`` is the share of cold accesses that continue a
    sequential scan instead of picking a cold page uniformly.
    """

    n_requests: int
    hot_page_count: int
    cold_page_count: int
    hot_access_fraction: float
    write_fraction: float
    seed: int
    request_size_dist: dict[int, float] = field(default_factory=lambda: {1: 1.0})
    scan_fraction: float = 0.0
    interarrival_ns: int = 100_000


# ---------------------------------------------------------------------------
# MSRC parsing
# ---------------------------------------------------------------------------

_comma = string(",")
_uint = regex(r"\d+").map(int)
_field = regex(r"[^,]*")

_msrc_line = seq(
    ticks=_uint << _comma,
    hostname=_field << _comma,
    disk=_field << _comma,
    op=regex(r"[A-Za-z]+") << _comma,
    offset=_uint << _comma,
    size=_uint << _comma,
    response=regex(r"[^,]*"),
)

_OP_TOKENS = {"read": Op.READ, "write": Op.WRITE}


def _parse_line(line: str, line_no: int, source: Path | str | None) -> tuple[int, Op, int, int]:
    try:
        fields = _msrc_line.parse(line)
    except ParseError as exc:
        raise TraceParseError(line_no, f"malformed MSRC line ({exc})", source) from exc

    op = _OP_TOKENS.get(fields["op"].lower())
    if op is None:
        raise TraceParseError(line_no, f"unknown request type '{fields['op']}'", source)

    page = fields["offset"] // PAGE_SIZE
    size_pages = max(1, math.ceil(fields["size"] / PAGE_SIZE))
    return fields["ticks"], op, page, size_pages


def parse_msrc(
    lines: Iterable[str], *, source: Path | str | None = None
) -> list[StorageRequest]:
    """Parse MSRC CSV lines into time-ordered page requests.

    Blank lines are skipped. Out-of-order timestamps are stably re-sorted
    before rebasing, so the earliest request is always at t=0.
    """
    raw: list[tuple[int, Op, int, int]] = []
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        raw.append(_parse_line(line, line_no, source))

    if not raw:
        return []

    if any(raw[i][0] > raw[i + 1][0] for i in range(len(raw) - 1)):
        raw.sort(key=lambda r: r[0])
    epoch = raw[0][0]
    return [
        StorageRequest((ticks - epoch) * MSRC_TICK_NS, op, page, size)
        for ticks, op, page, size in raw
    ]


def _decode_lines(lines: Iterable[bytes], source: Path) -> Iterator[str]:
    for line_no, raw in enumerate(lines, start=1):
        try:
            yield raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TraceParseError(line_no, f"invalid UTF-8 at byte {exc.start}", source) from exc


def load_msrc(path: Path) -> list[StorageRequest]:
    """Read and parse an MSRC CSV file."""
    with open(path, "rb") as f:
        return parse_msrc(_decode_lines(f, path), source=path)


def serialize_msrc(
    requests: Iterable[StorageRequest], *, hostname: str = "hsp", disk: int = 0
) -> Iterator[str]:
    """Render requests back to MSRC CSV lines (ResponseTime is written as 0)."""
    for req in requests:
        yield (
            f"{req.timestamp // MSRC_TICK_NS},{hostname},{disk},"
            f"{'Read' if req.op == Op.READ else 'Write'},"
            f"{req.page * PAGE_SIZE},{req.size_pages * PAGE_SIZE},0"
        )


def write_msrc(requests: Iterable[StorageRequest], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for line in serialize_msrc(requests):
            f.write(line + "\n")


# ---------------------------------------------------------------------------
# Mixing
# ---------------------------------------------------------------------------


def _page_span(requests: Sequence[StorageRequest]) -> tuple[int, int]:
    """Return ``(first_page, region_length)`` covering every touched page."""
    if not requests:
        return 0, 0
    lo = min(r.page for r in requests)
    hi = max(r.end_page for r in requests)
    return lo, hi - lo


def mix_traces(
    traces: Sequence[Sequence[StorageRequest]], start_offsets: Sequence[int]
) -> list[StorageRequest]:
    """Merge independent traces into one time-ordered stream.

    Each trace is shifted by its start offset (ns), tagged with its index as
    ``workload_id``, and remapped into its own contiguous page region so the
    workloads never alias. Ties in time keep the order of ``traces``.
    """
    if len(traces) != len(start_offsets):
        raise TraceError(
            f"{len(traces)} traces but {len(start_offsets)} start offsets"
        )

    shifted: list[list[StorageRequest]] = []
    base = 0
    for wid, (trace, offset) in enumerate(zip(traces, start_offsets)):
        lo, length = _page_span(trace)
        shifted.append(
            [
                StorageRequest(
                    r.timestamp + offset, r.op, base + (r.page - lo), r.size_pages, wid
                )
                for r in trace
            ]
        )
        base += length

    return list(heapq.merge(*shifted, key=lambda r: r.timestamp))


# ---------------------------------------------------------------------------
# Synthetic workloads
# ---------------------------------------------------------------------------


def _validate_synthetic(spec: SyntheticSpec) -> None:
    if spec.n_requests < 0:
        raise TraceError("n_requests must be >= 0")
    if spec.hot_page_count < 0 or spec.cold_page_count < 0:
        raise TraceError("page counts must be >= 0")
    if spec.hot_page_count + spec.cold_page_count == 0:
        raise TraceError("synthetic workload has zero pages")
    for name in ("hot_access_fraction", "write_fraction", "scan_fraction"):
        value = getattr(spec, name)
        if not 0.0 <= value <= 1.0:
            raise TraceError(f"{name} must be in [0, 1], got {value}")
    if spec.hot_page_count == 0 and spec.hot_access_fraction > 0:
        raise TraceError("hot_access_fraction > 0 but there are no hot pages")
    if spec.cold_page_count == 0 and spec.hot_access_fraction < 1:
        raise TraceError("hot_access_fraction < 1 but there are no cold pages")
    if not spec.request_size_dist or any(
        s < 1 or w < 0 for s, w in spec.request_size_dist.items()
    ):
        raise TraceError("request_size_dist needs sizes >= 1 with weights >= 0")
    if sum(spec.request_size_dist.values()) <= 0:
        raise TraceError("request_size_dist weights sum to zero")


def gen_synthetic(spec: SyntheticSpec) -> list[StorageRequest]:
    """Generate a seeded hot/cold workload.

    Page slots are spaced by the largest request size so a multi-page request
    never spills into a neighbouring slot. Hot slots come first, then cold
    slots. The output is a pure function of ``spec``.
    """
    _validate_synthetic(spec)
    rng = np.random.default_rng(spec.seed)
    n = spec.n_requests

    sizes = np.array(sorted(spec.request_size_dist), dtype=np.int64)
    weights = np.array([spec.request_size_dist[s] for s in sizes], dtype=np.float64)
    stride = int(sizes.max())

    is_hot = rng.random(n) < spec.hot_access_fraction
    hot_slot = rng.integers(0, max(spec.hot_page_count, 1), size=n)
    cold_slot = rng.integers(0, max(spec.cold_page_count, 1), size=n)
    is_scan = rng.random(n) < spec.scan_fraction
    is_write = rng.random(n) < spec.write_fraction
    req_size = rng.choice(sizes, size=n, p=weights / weights.sum())

    cold_base = spec.hot_page_count * stride
    cold_span = spec.cold_page_count * stride
    scan_cursor = 0

    requests: list[StorageRequest] = []
    for i in range(n):
        size = int(req_size[i])
        if is_hot[i]:
            page = int(hot_slot[i]) * stride
        elif is_scan[i]:
            if scan_cursor + size > cold_span:
                scan_cursor = 0
            page = cold_base + scan_cursor
            scan_cursor += size
        else:
            page = cold_base + int(cold_slot[i]) * stride
        op = Op.WRITE if is_write[i] else Op.READ
        requests.append(StorageRequest(i * spec.interarrival_ns, op, page, size))
    return requests


BUNDLED_WORKLOADS: dict[str, SyntheticSpec] = {
    "hotcold": SyntheticSpec(
        n_requests=20_000,
        hot_page_count=1,
        cold_page_count=20,
        hot_access_fraction=0.95,
        write_fraction=0.2,
        seed=1,
    ),
    "scan-mix": SyntheticSpec(
        n_requests=20_000,
        hot_page_count=16,
        cold_page_count=2_000,
        hot_access_fraction=0.4,
        write_fraction=0.3,
        seed=2,
        request_size_dist={1: 0.6, 4: 0.3, 16: 0.1},
        scan_fraction=0.5,
    ),
    "write-heavy": SyntheticSpec(
        n_requests=20_000,
        hot_page_count=32,
        cold_page_count=800,
        hot_access_fraction=0.7,
        write_fraction=0.9,
        seed=3,
        request_size_dist={1: 0.5, 2: 0.3, 8: 0.2},
    ),
    "read-heavy": SyntheticSpec(
        n_requests=20_000,
        hot_page_count=64,
        cold_page_count=1_500,
        hot_access_fraction=0.6,
        write_fraction=0.1,
        seed=4,
        request_size_dist={1: 0.7, 4: 0.3},
    ),
    "balanced": SyntheticSpec(
        n_requests=20_000,
        hot_page_count=48,
        cold_page_count=1_000,
        hot_access_fraction=0.5,
        write_fraction=0.5,
        seed=5,
        request_size_dist={1: 0.5, 2: 0.25, 8: 0.25},
        scan_fraction=0.2,
    ),
}

# Mixed-workload presets: write-intensive, read-intensive, and balanced
# members combined two or three at a time.
MIX_PRESETS: dict[str, tuple[str, ...]] = {
    "mix1": ("write-heavy", "write-heavy"),
    "mix2": ("write-heavy", "read-heavy"),
    "mix3": ("read-heavy", "read-heavy"),
    "mix4": ("balanced", "balanced"),
    "mix5": ("write-heavy", "read-heavy", "balanced"),
    "mix6": ("balanced", "read-heavy", "balanced"),
}


def bundled_trace(name: str, *, seed: int | None = None) -> list[StorageRequest]:
    """Generate a bundled workload, optionally overriding its seed."""
    try:
        spec = BUNDLED_WORKLOADS[name]
    except KeyError:
        raise TraceError(f"unknown bundled workload '{name}'") from None
    if seed is not None:
        spec = SyntheticSpec(**{**asdict(spec), "seed": seed})
    return gen_synthetic(spec)


def build_mix(name: str, seed: int) -> list[StorageRequest]:
    """Build a mixed-workload preset with randomly varied start offsets."""
    try:
        members = MIX_PRESETS[name]
    except KeyError:
        raise TraceError(f"unknown mix preset '{name}'") from None
    rng = np.random.default_rng(seed)
    traces = [bundled_trace(m, seed=seed * 31 + i) for i, m in enumerate(members)]
    horizon = max((t[-1].timestamp for t in traces if t), default=0)
    offsets = [int(o) for o in rng.integers(0, horizon // 2 + 1, size=len(traces))]
    return mix_traces(traces, offsets)


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


def workload_stats(requests: Sequence[StorageRequest]) -> WorkloadStats:
    """Summarise a trace: R/W mix, request size, and per-page hotness."""
    if not requests:
        raise TraceError("cannot compute statistics of an empty trace")

    touches: Counter[int] = Counter()
    writes = 0
    total_pages = 0
    for req in requests:
        if req.op == Op.WRITE:
            writes += 1
        total_pages += req.size_pages
        touches.update(req.pages)

    n = len(requests)
    write_fraction = writes / n
    return WorkloadStats(
        n_requests=n,
        write_fraction=write_fraction,
        read_fraction=1.0 - write_fraction,
        avg_request_size_pages=total_pages / n,
        avg_access_count=total_pages / len(touches),
        unique_pages=len(touches),
    )
