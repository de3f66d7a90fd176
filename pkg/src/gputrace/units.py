"""Byte-unit helpers.

Memory is carried in exact bytes everywhere; only display layers
convert. "GB" in user-facing text means binary gibibytes (2**30),
matching the conventional rounding of device memory figures.
"""

from __future__ import annotations

KIB = 1024
MIB = 1024**2
GIB = 1024**3
TIB = 1024**4


def gb_to_bytes(gb: float) -> int:
    """Convert a GB (GiB) figure to exact bytes, rounding to the nearest byte."""
    return round(gb * GIB)


def bytes_to_gb(n: int) -> float:
    return n / GIB


def format_gb(n: int | None, digits: int = 1) -> str:
    """Render bytes as a GB figure for tables, '-' when absent."""
    if n is None:
        return "-"
    return f"{n / GIB:.{digits}f}"
