"""Scaling fits and resource ratios.

Runtime and peak-memory measurements at several workload sizes go
through an ordinary least squares line; the slope, expressed per fixed
size increment (unit cost), feeds capacity planning: extrapolate the
line to a target size, or solve for where it crosses device capacity.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    CorruptRow,
    DegenerateInput,
    NonPositiveInput,
    PeakExceedsCapacity,
    SchemaMismatch,
)
from .traceio import open_csv_for_read

__all__ = [
    "ScalingPoint",
    "ScalingFit",
    "Extrapolation",
    "fit_linear",
    "unit_cost",
    "extrapolate",
    "speedup",
    "headroom",
    "read_points_csv",
    "POINTS_HEADER",
]

POINTS_HEADER = ["size", "value"]

# Sizes are divided by this before the normal equations are solved;
# cell counts in the millions against values in the tens otherwise make
# the sums needlessly ill-conditioned. Results are mapped back to the
# caller's units.
_SIZE_RESCALE = 100_000.0


@dataclass(frozen=True)
class ScalingPoint:
    """One measurement: workload size (cells or abstract units) and a
    metric value (seconds, bytes, GB...)."""

    size: float
    value: float

    def __post_init__(self) -> None:
        if self.size <= 0:
            raise ValueError(f"size must be > 0, got {self.size}")


@dataclass(frozen=True)
class ScalingFit:
    """A fitted line value = intercept + slope * size.

    ``slope`` is per single size unit; multiply by a unit (e.g. 100000)
    for a human-scale cost. ``size_min``/``size_max`` bound the fitted
    range for extrapolation flagging.
    """

    slope: float
    intercept: float
    r2: float
    n: int
    size_min: float
    size_max: float


@dataclass(frozen=True)
class Extrapolation:
    """A line evaluation; ``extrapolated`` is True when the requested
    size fell outside the fitted range."""

    value: float
    extrapolated: bool


def fit_linear(points: list[ScalingPoint]) -> ScalingFit:
    """Ordinary least squares over the points.

    Zero variance in the values fits a constant exactly, so r2 is
    defined as 1 there instead of 0/0.
    """
    if len(points) < 2 or len({p.size for p in points}) < 2:
        raise DegenerateInput("need at least two points with distinct sizes")
    xs = [p.size / _SIZE_RESCALE for p in points]
    ys = [p.value for p in points]
    n = len(points)
    x_bar = sum(xs) / n
    y_bar = sum(ys) / n
    sxx = sum((x - x_bar) ** 2 for x in xs)
    sxy = sum((x - x_bar) * (y - y_bar) for x, y in zip(xs, ys))
    slope_scaled = sxy / sxx
    intercept = y_bar - slope_scaled * x_bar
    ss_tot = sum((y - y_bar) ** 2 for y in ys)
    if ss_tot == 0:
        r2 = 1.0
    else:
        ss_res = sum((y - (intercept + slope_scaled * x)) ** 2 for x, y in zip(xs, ys))
        r2 = min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
    return ScalingFit(
        slope=slope_scaled / _SIZE_RESCALE,
        intercept=intercept,
        r2=r2,
        n=n,
        size_min=min(p.size for p in points),
        size_max=max(p.size for p in points),
    )


def unit_cost(fit: ScalingFit, unit: float) -> float:
    """Slope expressed per ``unit`` of size (e.g. seconds per 100k cells)."""
    return fit.slope * unit


def extrapolate(fit: ScalingFit, size: float) -> Extrapolation:
    """Evaluate the fitted line at ``size`` (> 0)."""
    if size <= 0:
        raise ValueError(f"size must be > 0, got {size}")
    return Extrapolation(
        value=fit.intercept + fit.slope * size,
        extrapolated=not fit.size_min <= size <= fit.size_max,
    )


def speedup(total_baseline_s: float, total_accelerated_s: float) -> float:
    """Baseline over accelerated runtime; both must be positive."""
    if total_baseline_s <= 0 or total_accelerated_s <= 0:
        raise NonPositiveInput(
            f"runtimes must be > 0, got {total_baseline_s} and {total_accelerated_s}"
        )
    return total_baseline_s / total_accelerated_s


def headroom(peak_bytes: float, capacity_bytes: float) -> float:
    """Fraction of capacity consumed at peak, in [0, 1]."""
    if capacity_bytes <= 0:
        raise NonPositiveInput(f"capacity must be > 0, got {capacity_bytes}")
    if peak_bytes < 0:
        raise NonPositiveInput(f"peak must be >= 0, got {peak_bytes}")
    if peak_bytes > capacity_bytes:
        raise PeakExceedsCapacity(
            f"peak {peak_bytes} exceeds capacity {capacity_bytes}"
        )
    return peak_bytes / capacity_bytes


def read_points_csv(path: Path) -> list[ScalingPoint]:
    """Read scaling points from a CSV with header ``size,value``."""
    path = Path(path)
    points: list[ScalingPoint] = []
    with open_csv_for_read(path) as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != POINTS_HEADER:
            raise SchemaMismatch(f"{path}: expected header 'size,value'")
        for line_no, fields in enumerate(reader, start=2):
            if not fields:
                continue
            if len(fields) != 2:
                raise CorruptRow("expected 2 fields", str(path), line_no)
            try:
                points.append(ScalingPoint(size=float(fields[0]), value=float(fields[1])))
            except ValueError as exc:
                raise CorruptRow(str(exc), str(path), line_no) from exc
    return points
