"""Shared fixtures for pytest."""

from __future__ import annotations

from pathlib import Path

import pytest

from hsp_lib import console

FIXTURE_DIR = Path(__file__).parent / "fixtures"


@pytest.fixture(autouse=True)
def _plain_console():
    """Tests compare plain text; colour is switched on per test when needed."""
    console.set_color_depth(console.ColorDepth.NONE)
    yield
    console.set_color_depth(None)


@pytest.fixture
def msrc_fixture() -> Path:
    """Six-request MSRC CSV: 10 pages touched, 8 unique."""
    return FIXTURE_DIR / "tiny_msrc.csv"


@pytest.fixture
def hm_config() -> Path:
    """Two-tier CDE config over a 300-request synthetic trace."""
    return FIXTURE_DIR / "h_m.kdl"


@pytest.fixture
def output_root(monkeypatch, tmp_path) -> Path:
    """Send run reports to a temporary directory."""
    root = tmp_path / "runs"
    monkeypatch.setenv("HSP_OUTPUT_DIR", str(root))
    return root
