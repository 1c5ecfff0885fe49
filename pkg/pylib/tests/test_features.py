"""Tests for features: binning, packed codec and normalisation."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hsp_lib.errors import CodecError
from hsp_lib.features import (
    COUNT_BINS,
    INTERVAL_BINS,
    ObservationVector,
    bin_boundaries,
    fraction_bin,
    log_bin,
    n_features,
    normalize,
    normalize_codes,
    observe,
    pack,
    size_bin,
    state_bits,
    unpack,
)
from hsp_lib.hssenv import RawFeatures
from hsp_lib.types import Op


def _raw(**overrides) -> RawFeatures:
    base = {
        "size_pages": 1,
        "op": Op.READ,
        "access_interval": None,
        "access_count": 0,
        "fast_remaining_fraction": 1.0,
        "current_tier": None,
        "n_tiers": 2,
    }
    base.update(overrides)
    return RawFeatures(**base)


@st.composite
def observations(draw, n_tiers: int = 2) -> ObservationVector:
    return ObservationVector(
        size_bin=draw(st.integers(0, 7)),
        type_bin=draw(st.integers(0, 1)),
        intr_bin=draw(st.integers(0, 63)),
        cnt_bin=draw(st.integers(0, 63)),
        cap_bin=draw(st.integers(0, 7)),
        curr_bin=draw(st.integers(0, n_tiers - 1)),
        mid_cap_bin=draw(st.integers(0, 7)) if n_tiers == 3 else None,
    )


class TestBins:
    @pytest.mark.parametrize(
        ("pages", "expected"),
        [(1, 0), (2, 1), (3, 2), (4, 2), (5, 3), (8, 3), (9, 4), (16, 4), (17, 5), (64, 6), (65, 7), (10_000, 7)],
    )
    def test_size_buckets(self, pages, expected):
        assert size_bin(pages) == expected

    def test_log_bin(self):
        assert [log_bin(v, 64) for v in (0, 1, 2, 3, 6, 7)] == [0, 1, 1, 2, 2, 3]
        assert log_bin(1 << 80, 64) == 63

    def test_fraction_bin_edges(self):
        assert fraction_bin(0.0) == 0
        assert fraction_bin(0.124) == 0
        assert fraction_bin(0.125) == 1
        assert fraction_bin(1.0) == 7

    def test_sizes(self):
        assert (state_bits(2), state_bits(3)) == (40, 48)
        assert (n_features(2), n_features(3)) == (6, 7)


class TestObserve:
    def test_unseen_page_bins(self):
        obs = observe(_raw())
        assert obs.intr_bin == INTERVAL_BINS - 1
        assert obs.cnt_bin == 0
        assert obs.curr_bin == 1
        assert obs.cap_bin == 7

    def test_write_and_resident(self):
        obs = observe(_raw(op=Op.WRITE, access_interval=5, access_count=3, current_tier=0))
        assert (obs.type_bin, obs.intr_bin, obs.cnt_bin, obs.curr_bin) == (1, 2, 2, 0)

    def test_tri_hybrid_adds_middle(self):
        obs = observe(_raw(n_tiers=3, middle_remaining_fraction=0.5))
        assert obs.mid_cap_bin == 4
        assert obs.curr_bin == 2
        assert obs.n_tiers == 3

    def test_huge_count_clamped(self):
        obs = observe(_raw(access_count=1 << 70))
        assert obs.cnt_bin == COUNT_BINS - 1


class TestCodec:
    @given(observations())
    def test_dual_codec_identity(self, obs):
        code = pack(obs)
        assert code < (1 << 40)
        assert unpack(code, 2) == obs

    @given(observations(n_tiers=3))
    def test_tri_codec_identity(self, obs):
        code = pack(obs)
        assert code < (1 << 48)
        assert unpack(code, 3) == obs

    def test_golden_code(self):
        # interval 63 at bit 12, fast cap 7 at bit 28, current tier 1 at bit 36
        obs = ObservationVector(0, 0, 63, 0, 7, 1)
        assert pack(obs) == 0x10_7003_F000
        assert unpack(0x10_7003_F000, 2) == obs

    def test_golden_tri_code(self):
        obs = ObservationVector(2, 1, 5, 9, 3, 2, mid_cap_bin=6)
        expected = 2 | 1 << 8 | 5 << 12 | 9 << 20 | 3 << 28 | 2 << 36 | 6 << 40
        assert expected == 0x0620_3090_5102
        assert pack(obs) == expected

    def test_out_of_range_bin_rejected(self):
        with pytest.raises(CodecError):
            pack(ObservationVector(8, 0, 0, 0, 0, 0))

    def test_code_too_wide(self):
        with pytest.raises(CodecError):
            unpack(1 << 40, 2)

    def test_code_with_bad_bin(self):
        # type field holds 3, but only 2 type bins exist
        with pytest.raises(CodecError):
            unpack(3 << 8, 2)

    def test_negative_code(self):
        with pytest.raises(CodecError):
            unpack(-1, 2)


class TestNormalize:
    def test_range(self):
        obs = ObservationVector(7, 1, 63, 63, 7, 1)
        assert np.allclose(normalize(obs), np.ones(6))
        assert np.allclose(normalize(ObservationVector(0, 0, 0, 0, 0, 0)), np.zeros(6))

    @given(st.lists(observations(), min_size=1, max_size=20))
    def test_vectorised_matches_scalar(self, batch):
        codes = np.array([pack(o) for o in batch], dtype=np.uint64)
        expected = np.stack([normalize(o) for o in batch])
        assert np.allclose(normalize_codes(codes, 2), expected)

    @given(st.lists(observations(n_tiers=3), min_size=1, max_size=10))
    def test_vectorised_tri(self, batch):
        codes = np.array([pack(o) for o in batch], dtype=np.uint64)
        expected = np.stack([normalize(o) for o in batch])
        assert np.allclose(normalize_codes(codes, 3), expected)


class TestBoundaries:
    def test_dual_keys(self):
        b = bin_boundaries(2)
        assert b["packed_bits"] == 40
        assert "middle_remaining_fraction" not in b
        assert b["size_pages"]["lower_edges"][-1] == 65

    def test_tri_keys(self):
        b = bin_boundaries(3)
        assert b["packed_bits"] == 48
        assert b["current_tier"]["bins"] == 3
