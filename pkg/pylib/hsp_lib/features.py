"""Binned observation vector, its packed codec, and input normalisation.

Field layout of the packed code (little-endian, least significant first)::

    bits  0-7   size      8 bins
    bits  8-11  type      2 bins
    bits 12-19  interval 64 bins
    bits 20-27  count    64 bins
    bits 28-35  fast cap  8 bins
    bits 36-39  current   2 bins (3 in tri-hybrid mode)
    bits 40-47  mid cap   8 bins (tri-hybrid mode only)

Field widths exceed what the bin counts need.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from hsp_lib.errors import CodecError
from hsp_lib.hssenv import RawFeatures
from hsp_lib.types import Op

SIZE_BINS = 8
TYPE_BINS = 2
INTERVAL_BINS = 64
COUNT_BINS = 64
CAP_BINS = 8

# (name, width in bits) in packing order
_FIELDS: tuple[tuple[str, int], ...] = (
    ("size_bin", 8),
    ("type_bin", 4),
    ("intr_bin", 8),
    ("cnt_bin", 8),
    ("cap_bin", 8),
    ("curr_bin", 4),
)
_MID_FIELD = ("mid_cap_bin", 8)

DUAL_STATE_BITS = sum(w for _, w in _FIELDS)  # 40
TRI_STATE_BITS = DUAL_STATE_BITS + _MID_FIELD[1]  # 48


def state_bits(n_tiers: int) -> int:
    return TRI_STATE_BITS if n_tiers == 3 else DUAL_STATE_BITS


def n_features(n_tiers: int) -> int:
    return 7 if n_tiers == 3 else 6


@dataclass(frozen=True, slots=True)
class ObservationVector:
    size_bin: int
    type_bin: int
    intr_bin: int
    cnt_bin: int
    cap_bin: int
    curr_bin: int
    mid_cap_bin: int | None = None  # present iff tri-hybrid

    @property
    def n_tiers(self) -> int:
        return 3 if self.mid_cap_bin is not None else 2

    def bin_counts(self) -> tuple[int, ...]:
        counts = (SIZE_BINS, TYPE_BINS, INTERVAL_BINS, COUNT_BINS, CAP_BINS, self.n_tiers)
        return counts + ((CAP_BINS,) if self.mid_cap_bin is not None else ())

    def values(self) -> tuple[int, ...]:
        base = (self.size_bin, self.type_bin, self.intr_bin, self.cnt_bin, self.cap_bin, self.curr_bin)
        return base + ((self.mid_cap_bin,) if self.mid_cap_bin is not None else ())

    def is_valid(self) -> bool:
        return all(0 <= v < c for v, c in zip(self.values(), self.bin_counts()))


# ---------------------------------------------------------------------------
# Binning
# ---------------------------------------------------------------------------


def size_bin(size_pages: int) -> int:
    """Buckets {1, 2, 3-4, 5-8, 9-16, 17-32, 33-64, >=65}."""
    return min((max(size_pages, 1) - 1).bit_length(), SIZE_BINS - 1)


def log_bin(value: int, n_bins: int) -> int:
    """floor(log2(value + 1)), clamped to the last bin."""
    return min((max(value, 0) + 1).bit_length() - 1, n_bins - 1)


def fraction_bin(fraction: float, n_bins: int = CAP_BINS) -> int:
    return min(max(int(fraction * n_bins), 0), n_bins - 1)


def observe(raw: RawFeatures) -> ObservationVector:
    """Quantise a raw feature snapshot into bins."""
    slow = raw.n_tiers - 1
    interval = (
        INTERVAL_BINS - 1
        if raw.access_interval is None
        else log_bin(raw.access_interval, INTERVAL_BINS)
    )
    mid = None
    if raw.n_tiers == 3:
        mid = fraction_bin(raw.middle_remaining_fraction or 0.0)
    return ObservationVector(
        size_bin=size_bin(raw.size_pages),
        type_bin=0 if raw.op == Op.READ else 1,
        intr_bin=interval,
        cnt_bin=log_bin(raw.access_count, COUNT_BINS),
        cap_bin=fraction_bin(raw.fast_remaining_fraction),
        curr_bin=slow if raw.current_tier is None else raw.current_tier,
        mid_cap_bin=mid,
    )


# ---------------------------------------------------------------------------
# Codec
# ---------------------------------------------------------------------------


def _layout(n_tiers: int) -> tuple[tuple[str, int], ...]:
    return _FIELDS + ((_MID_FIELD,) if n_tiers == 3 else ())


def pack(obs: ObservationVector) -> int:
    if not obs.is_valid():
        raise CodecError(f"observation has out-of-range bins: {obs}")
    code = 0
    shift = 0
    for name, width in _layout(obs.n_tiers):
        code |= getattr(obs, name) << shift
        shift += width
    return code


def unpack(code: int, n_tiers: int = 2) -> ObservationVector:
    bits = state_bits(n_tiers)
    if code < 0 or code >> bits:
        raise CodecError(f"code {code:#x} does not fit in {bits} bits")
    values: dict[str, Any] = {}
    shift = 0
    for name, width in _layout(n_tiers):
        values[name] = (code >> shift) & ((1 << width) - 1)
        shift += width
    obs = ObservationVector(**values)
    if not obs.is_valid():
        raise CodecError(f"code {code:#x} decodes to out-of-range bins: {obs}")
    return obs


# ---------------------------------------------------------------------------
# Normalisation
# ---------------------------------------------------------------------------


def normalize(obs: ObservationVector) -> np.ndarray:
    """Scale each bin index to [0, 1] by its bin count minus one."""
    values = np.array(obs.values(), dtype=np.float64)
    scale = np.array(obs.bin_counts(), dtype=np.float64) - 1.0
    return values / scale


def normalize_codes(codes: np.ndarray, n_tiers: int = 2) -> np.ndarray:
    """Vectorised ``normalize(unpack(c))`` for an array of packed codes."""
    codes = np.asarray(codes, dtype=np.uint64)
    layout = _layout(n_tiers)
    counts = (SIZE_BINS, TYPE_BINS, INTERVAL_BINS, COUNT_BINS, CAP_BINS, n_tiers, CAP_BINS)
    out = np.empty((codes.shape[0], len(layout)), dtype=np.float64)
    shift = 0
    for col, (_, width) in enumerate(layout):
        field = (codes >> np.uint64(shift)) & np.uint64((1 << width) - 1)
        out[:, col] = field.astype(np.float64) / (counts[col] - 1)
        shift += width
    return out


def bin_boundaries(n_tiers: int = 2) -> dict[str, Any]:
    """Bin edges as JSON-ready data, for reproducibility audits."""
    return {
        "size_pages": {
            "bins": SIZE_BINS,
            "lower_edges": [1, 2, 3, 5, 9, 17, 33, 65],
            "rule": "bin = min(bit_length(size - 1), 7)",
        },
        "type": {"bins": TYPE_BINS, "values": {"read": 0, "write": 1}},
        "access_interval": {
            "bins": INTERVAL_BINS,
            "rule": "bin = min(floor(log2(interval + 1)), 63); never seen -> 63",
        },
        "access_count": {
            "bins": COUNT_BINS,
            "rule": "bin = min(floor(log2(count + 1)), 63)",
        },
        "fast_remaining_fraction": {
            "bins": CAP_BINS,
            "rule": "bin = min(floor(fraction * 8), 7)",
        },
        "current_tier": {"bins": n_tiers, "rule": "tier index; unplaced -> slowest tier"},
        **(
            {"middle_remaining_fraction": {"bins": CAP_BINS, "rule": "bin = min(floor(fraction * 8), 7)"}}
            if n_tiers == 3
            else {}
        ),
        "packed_bits": state_bits(n_tiers),
    }
