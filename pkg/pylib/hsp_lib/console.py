"""Terminal output helpers: colour, tables, status lines and timing.

Color depth is detected from the terminal environment:
  - 256-color (COLORTERM or "256color" in TERM)
  - 16-color (any other TERM with "color")
  - no color (dumb terminal, non-TTY, or NO_COLOR set)

Machine-readable output (JSON, CSV) never goes through these helpers.
"""

from __future__ import annotations

import os
import sys
import time
from collections.abc import Sequence
from enum import IntEnum, StrEnum
from typing import Any, Self


# ---------------------------------------------------------------------------
# Color depth detection
# ---------------------------------------------------------------------------


class ColorDepth(IntEnum):
    NONE = 0
    BASIC = 16
    FULL = 256


def detect_color_depth() -> ColorDepth:
    """Detect terminal color support from the environment."""
    # NO_COLOR convention (https://no-color.org/)
    if "NO_COLOR" in os.environ:
        return ColorDepth.NONE

    if not hasattr(sys.stdout, "isatty") or not sys.stdout.isatty():
        return ColorDepth.NONE

    term = os.environ.get("TERM", "")
    colorterm = os.environ.get("COLORTERM", "")

    if colorterm in ("truecolor", "24bit", "256color") or "256color" in term:
        return ColorDepth.FULL
    if "color" in term or colorterm:
        return ColorDepth.BASIC
    if term in ("", "dumb"):
        return ColorDepth.NONE
    return ColorDepth.BASIC


_color_depth: ColorDepth | None = None


def _get_color_depth() -> ColorDepth:
    global _color_depth
    if _color_depth is None:
        _color_depth = detect_color_depth()
    return _color_depth


def set_color_depth(depth: ColorDepth | None) -> None:
    """Override the detected color depth; ``None`` re-detects on next use."""
    global _color_depth
    _color_depth = depth


# ---------------------------------------------------------------------------
# Roles
# ---------------------------------------------------------------------------


class Role(StrEnum):
    HEADER = "header"
    POLICY = "policy"
    GOOD = "good"
    BAD = "bad"
    MUTED = "muted"


# role -> (256-color number, 16-color SGR code)
_ROLE_COLORS: dict[Role, tuple[int, str]] = {
    Role.HEADER: (75, "94"),
    Role.POLICY: (214, "33"),
    Role.GOOD: (114, "92"),
    Role.BAD: (204, "91"),
    Role.MUTED: (244, "37"),
}


def colorize(text: str, role: Role) -> str:
    depth = _get_color_depth()
    if depth == ColorDepth.NONE:
        return text
    n256, sgr = _ROLE_COLORS[role]
    start = f"\033[38;5;{n256}m" if depth == ColorDepth.FULL else f"\033[{sgr}m"
    return f"{start}{text}\033[0m"


def normalized_role(value: float | None) -> Role:
    """Colour for a latency normalised to Fast-Only (1.0 is ideal)."""
    if value is None:
        return Role.MUTED
    return Role.GOOD if value <= 1.5 else Role.BAD


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------


def _cell(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def format_table(
    headers: Sequence[str],
    rows: Sequence[Sequence[Any]],
    *,
    roles: Sequence[Sequence[Role | None]] | None = None,
) -> str:
    """Left-aligned text table; ``roles`` optionally colours individual cells."""
    text = [[_cell(v) for v in row] for row in rows]
    widths = [len(h) for h in headers]
    for row in text:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))

    lines = ["  ".join(colorize(h.ljust(w), Role.HEADER) for h, w in zip(headers, widths))]
    for r, row in enumerate(text):
        cells = []
        for i, cell in enumerate(row):
            padded = cell.ljust(widths[i])
            role = roles[r][i] if roles is not None else None
            cells.append(colorize(padded, role) if role is not None else padded)
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Status lines
# ---------------------------------------------------------------------------


def phase(message: str, *, verbose: bool = True) -> None:
    if verbose:
        print(f"# phase: {message}", file=sys.stderr, flush=True)


def warn(message: str) -> None:
    print(f"warning: {message}", file=sys.stderr, flush=True)


class Timer:
    """Context manager that captures wall-clock and process CPU time."""

    def __enter__(self) -> Self:
        self.wall = time.monotonic()
        self.times = os.times()
        self.elapsed = 0.0
        self.user = 0.0
        self.sys = 0.0
        return self

    def __exit__(self, *_exc: Any) -> bool:
        wall_end = time.monotonic()
        times_end = os.times()
        self.elapsed = wall_end - self.wall
        self.user = times_end.user - self.times.user
        self.sys = times_end.system - self.times.system
        return False

    def __str__(self) -> str:
        return f"real {self.elapsed:.1f}s  user {self.user:.1f}s  sys {self.sys:.1f}s"
