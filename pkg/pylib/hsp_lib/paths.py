"""Platform-aware default locations for configs and run output.

  - macOS: ~/Library/Application Support/net.hsp.placement/
  - Linux: XDG base directories with app name "hsp"

``HSP_OUTPUT_DIR`` overrides every run-output location.
"""

from __future__ import annotations

import os
import sys
from pathlib import Path

APP_NAME = "hsp"
BUNDLE_ID = "net.hsp.placement"
OUTPUT_ENV = "HSP_OUTPUT_DIR"


def _is_macos() -> bool:
    return sys.platform == "darwin"


def config_dir() -> Path:
    """~/Library/Application Support/<bundle>/ on macOS, $XDG_CONFIG_HOME/hsp/ on Linux."""
    if _is_macos():
        return Path.home() / "Library" / "Application Support" / BUNDLE_ID
    xdg = os.environ.get("XDG_CONFIG_HOME")
    if xdg:
        return Path(xdg) / APP_NAME
    return Path.home() / ".config" / APP_NAME


def data_dir() -> Path:
    """~/Library/Application Support/<bundle>/ on macOS, $XDG_DATA_HOME/hsp/ on Linux."""
    if _is_macos():
        return Path.home() / "Library" / "Application Support" / BUNDLE_ID
    xdg = os.environ.get("XDG_DATA_HOME")
    if xdg:
        return Path(xdg) / APP_NAME
    return Path.home() / ".local" / "share" / APP_NAME


def config_file() -> Path:
    """Default experiment config: hsp.kdl in the config directory."""
    return config_dir() / "hsp.kdl"


def output_dir(configured: str | Path | None = None) -> Path:
    """Where run reports go.

    Search order:
    1. $HSP_OUTPUT_DIR (explicit override)
    2. ``configured`` (the config's ``output { dir }``)
    3. <data dir>/runs
    """
    env = os.environ.get(OUTPUT_ENV)
    if env:
        return Path(env)
    if configured:
        return Path(configured)
    return data_dir() / "runs"
