"""Self-contained SVG charts and text tables for sessions and fits.

Rendering is a pure function of its inputs: identical input yields
byte-identical output, so golden files stay stable and diffs are
meaningful. No plotting library is involved; the documents are plain
SVG 1.1 built by string assembly.

Axis transform (the contract tests invert): with margins ``M_*`` and a
plot rectangle of ``inner_w x inner_h``,

    x_px = M_LEFT + (x - x_lo) / (x_hi - x_lo) * inner_w
    y_px = M_TOP + inner_h - (v - lo) / (hi - lo) * inner_h

where ``(lo, hi)`` is the left or right axis range. The left axis is
fixed to [0, 100] percent for usage plots; the right axis runs from 0
to the next whole GB above the observed maximum, so cross-run plots of
similar workloads stay comparable. Coordinates are written with two
decimals, which keeps the inversion error under half a pixel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

from .analysis import ScalingFit, ScalingPoint, unit_cost
from .errors import EmptySession
from .trace import Session, Step, StepSummary, attribute_steps, total_runtime_s
from .units import GIB, format_gb

__all__ = [
    "Series",
    "PlotSpec",
    "render_plot",
    "render_usage",
    "render_scaling",
    "render_table",
    "x_to_px",
    "y_to_px",
    "MARGIN_LEFT",
    "MARGIN_RIGHT",
    "MARGIN_TOP",
    "MARGIN_BOTTOM",
]

MARGIN_LEFT = 64.0
MARGIN_RIGHT = 64.0
MARGIN_TOP = 40.0
MARGIN_BOTTOM = 56.0

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b")
_FONT = 'font-family="monospace" font-size="12"'

# Crowding heuristic for marker labels: monospace glyphs are about this
# wide at font-size 12.
_CHAR_PX = 7.0


@dataclass(frozen=True)
class Series:
    """One plotted line. ``points`` are (x, value) pairs in data space;
    a None entry breaks the line (gap in the data)."""

    name: str
    axis: str
    points: tuple

    def __post_init__(self) -> None:
        if self.axis not in ("left", "right"):
            raise ValueError(f"axis must be 'left' or 'right', got {self.axis!r}")
        for p in self.points:
            if p is None:
                continue
            x, y = p
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ValueError(f"non-finite point in series {self.name!r}: {p}")


@dataclass(frozen=True)
class PlotSpec:
    """Everything render_plot needs, in data space."""

    width_px: int
    height_px: int
    title: str
    series: tuple[Series, ...]
    x_range: tuple[float, float]
    left_range: tuple[float, float]
    right_range: tuple[float, float] | None = None
    vlines: tuple[tuple[float, str], ...] = ()
    fit_line: tuple[float, float] | None = None
    bands: tuple[tuple[float, float], ...] = ()
    x_label: str = ""
    left_label: str = ""
    right_label: str = ""
    annotations: tuple[str, ...] = ()
    point_marks: bool = False

    def __post_init__(self) -> None:
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("plot dimensions must be positive")
        if not self.series:
            raise ValueError("a plot needs at least one series")
        for lo, hi in filter(None, (self.x_range, self.left_range, self.right_range)):
            if not hi > lo:
                raise ValueError(f"axis range must have hi > lo, got ({lo}, {hi})")
        if self.right_range is None and any(s.axis == "right" for s in self.series):
            raise ValueError("right-axis series present but right_range is None")


def _inner(spec: PlotSpec) -> tuple[float, float]:
    return (
        spec.width_px - MARGIN_LEFT - MARGIN_RIGHT,
        spec.height_px - MARGIN_TOP - MARGIN_BOTTOM,
    )


def x_to_px(spec: PlotSpec, x: float) -> float:
    lo, hi = spec.x_range
    inner_w, _ = _inner(spec)
    return MARGIN_LEFT + (x - lo) / (hi - lo) * inner_w


def y_to_px(spec: PlotSpec, value: float, axis: str = "left") -> float:
    lo, hi = spec.left_range if axis == "left" else spec.right_range
    _, inner_h = _inner(spec)
    return MARGIN_TOP + inner_h - (value - lo) / (hi - lo) * inner_h


def _px(v: float) -> str:
    return f"{v:.2f}"


def _esc(text: str) -> str:
    return escape(text, {'"': "&quot;"})


def _slug(name: str) -> str:
    return "".join(c if c.isalnum() else "-" for c in name.lower())


def _tick_values(lo: float, hi: float, count: int = 5) -> list[float]:
    return [lo + i * (hi - lo) / (count - 1) for i in range(count)]


def _series_segments(points: tuple) -> list[list[tuple[float, float]]]:
    segments: list[list[tuple[float, float]]] = []
    current: list[tuple[float, float]] = []
    for p in points:
        if p is None:
            if current:
                segments.append(current)
                current = []
        else:
            current.append(p)
    if current:
        segments.append(current)
    return segments


def render_plot(spec: PlotSpec) -> str:
    """Assemble the SVG document for a PlotSpec."""
    inner_w, inner_h = _inner(spec)
    top, bottom = MARGIN_TOP, MARGIN_TOP + inner_h
    left, right = MARGIN_LEFT, MARGIN_LEFT + inner_w
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{spec.width_px}" '
        f'height="{spec.height_px}" viewBox="0 0 {spec.width_px} {spec.height_px}">',
        f'<rect x="0" y="0" width="{spec.width_px}" height="{spec.height_px}" fill="#ffffff"/>',
    ]

    for start, end in spec.bands:
        x0, x1 = x_to_px(spec, start), x_to_px(spec, end)
        out.append(
            f'<rect class="step-band" x="{_px(x0)}" y="{_px(top)}" '
            f'width="{_px(x1 - x0)}" height="{_px(inner_h)}" fill="#f0f0f0"/>'
        )

    out.append(
        f'<rect class="plot-frame" x="{_px(left)}" y="{_px(top)}" '
        f'width="{_px(inner_w)}" height="{_px(inner_h)}" fill="none" stroke="#333333"/>'
    )

    # axis ticks and numerals
    for x in _tick_values(*spec.x_range):
        px = x_to_px(spec, x)
        out.append(
            f'<line class="tick" x1="{_px(px)}" y1="{_px(bottom)}" '
            f'x2="{_px(px)}" y2="{_px(bottom + 5)}" stroke="#333333"/>'
        )
        out.append(
            f'<text class="tick-label" x="{_px(px)}" y="{_px(bottom + 18)}" '
            f'{_FONT} text-anchor="middle">{x:g}</text>'
        )
    for v in _tick_values(*spec.left_range):
        py = y_to_px(spec, v, "left")
        out.append(
            f'<line class="tick" x1="{_px(left - 5)}" y1="{_px(py)}" '
            f'x2="{_px(left)}" y2="{_px(py)}" stroke="#333333"/>'
        )
        out.append(
            f'<text class="tick-label" x="{_px(left - 8)}" y="{_px(py + 4)}" '
            f'{_FONT} text-anchor="end">{v:g}</text>'
        )
    if spec.right_range is not None:
        for v in _tick_values(*spec.right_range):
            py = y_to_px(spec, v, "right")
            out.append(
                f'<line class="tick" x1="{_px(right)}" y1="{_px(py)}" '
                f'x2="{_px(right + 5)}" y2="{_px(py)}" stroke="#333333"/>'
            )
            out.append(
                f'<text class="tick-label" x="{_px(right + 8)}" y="{_px(py + 4)}" '
                f'{_FONT} text-anchor="start">{v:g}</text>'
            )

    # marker lines with labels, rotated when the gap to the next marker
    # is too narrow for horizontal text
    for i, (x, label) in enumerate(spec.vlines):
        px = x_to_px(spec, x)
        out.append(
            f'<line class="marker-line" x1="{_px(px)}" y1="{_px(top)}" '
            f'x2="{_px(px)}" y2="{_px(bottom)}" stroke="#888888" stroke-dasharray="4,3"/>'
        )
        next_x = spec.vlines[i + 1][0] if i + 1 < len(spec.vlines) else spec.x_range[1]
        avail = x_to_px(spec, next_x) - px
        if _CHAR_PX * len(label) + 4 > avail:
            ax, ay = px + 4, top + 4
            out.append(
                f'<text class="marker-label" x="{_px(ax)}" y="{_px(ay)}" {_FONT} '
                f'transform="rotate(90 {_px(ax)} {_px(ay)})">{_esc(label)}</text>'
            )
        else:
            out.append(
                f'<text class="marker-label" x="{_px(px + 3)}" y="{_px(top + 13)}" '
                f"{_FONT}>{_esc(label)}</text>"
            )

    for i, series in enumerate(spec.series):
        color = _PALETTE[i % len(_PALETTE)]
        css = f"series-{_slug(series.name)}"
        for segment in _series_segments(series.points):
            pts = " ".join(
                f"{_px(x_to_px(spec, x))},{_px(y_to_px(spec, y, series.axis))}"
                for x, y in segment
            )
            if len(segment) == 1:
                x, y = segment[0]
                out.append(
                    f'<circle class="{css}" cx="{_px(x_to_px(spec, x))}" '
                    f'cy="{_px(y_to_px(spec, y, series.axis))}" r="2" fill="{color}"/>'
                )
            else:
                out.append(
                    f'<polyline class="{css}" points="{pts}" fill="none" '
                    f'stroke="{color}" stroke-width="1.5"/>'
                )
        if spec.point_marks:
            for p in series.points:
                if p is None:
                    continue
                x, y = p
                out.append(
                    f'<circle class="point" cx="{_px(x_to_px(spec, x))}" '
                    f'cy="{_px(y_to_px(spec, y, series.axis))}" r="3" fill="{color}"/>'
                )

    if spec.fit_line is not None:
        slope, intercept = spec.fit_line
        xs = [p[0] for s in spec.series for p in s.points if p is not None]
        x0, x1 = min(xs), max(xs)
        out.append(
            f'<line class="trend" x1="{_px(x_to_px(spec, x0))}" '
            f'y1="{_px(y_to_px(spec, intercept + slope * x0))}" '
            f'x2="{_px(x_to_px(spec, x1))}" '
            f'y2="{_px(y_to_px(spec, intercept + slope * x1))}" '
            f'stroke="#d62728" stroke-width="1.5" stroke-dasharray="6,3"/>'
        )

    if spec.title:
        out.append(
            f'<text class="title" x="{_px(spec.width_px / 2)}" y="22" {_FONT} '
            f'text-anchor="middle" font-weight="bold">{_esc(spec.title)}</text>'
        )
    if spec.x_label:
        out.append(
            f'<text class="axis-label" x="{_px(left + inner_w / 2)}" '
            f'y="{_px(spec.height_px - 12)}" {_FONT} text-anchor="middle">'
            f"{_esc(spec.x_label)}</text>"
        )
    if spec.left_label:
        x, y = 16.0, top + inner_h / 2
        out.append(
            f'<text class="axis-label" x="{_px(x)}" y="{_px(y)}" {_FONT} '
            f'text-anchor="middle" transform="rotate(-90 {_px(x)} {_px(y)})">'
            f"{_esc(spec.left_label)}</text>"
        )
    if spec.right_label:
        x, y = spec.width_px - 12.0, top + inner_h / 2
        out.append(
            f'<text class="axis-label" x="{_px(x)}" y="{_px(y)}" {_FONT} '
            f'text-anchor="middle" transform="rotate(90 {_px(x)} {_px(y)})">'
            f"{_esc(spec.right_label)}</text>"
        )
    for i, note in enumerate(spec.annotations):
        out.append(
            f'<text class="annotation" x="{_px(left + 8)}" '
            f'y="{_px(top + 16 + 14 * i)}" {_FONT}>{_esc(note)}</text>'
        )

    out.append("</svg>")
    return "\n".join(out) + "\n"


def build_usage_spec(session: Session, steps: list[Step] | None = None) -> PlotSpec:
    """Translate a session into plot space (exposed so tests can invert
    the transforms against the same ranges the renderer used)."""
    if not session.samples:
        raise EmptySession("session has no samples to plot")
    if steps is None:
        steps = attribute_steps(session) if session.markers else []

    util_pts: list = []
    mem_pts: list = []
    for s in session.samples:
        t = s.elapsed_ms / 1000
        util_pts.append(None if s.gpu_util_pct is None else (t, s.gpu_util_pct))
        mem_pts.append(None if s.mem_used_bytes is None else (t, s.mem_used_bytes / GIB))

    series = [
        Series("gpu util", "left", tuple(util_pts)),
        Series("gpu mem", "right", tuple(mem_pts)),
    ]
    gb_values = [p[1] for p in mem_pts if p is not None]
    if session.process:
        # CPU% can exceed 100 on multicore; the left axis is fixed to
        # [0, 100], so clamp for display.
        series.append(
            Series(
                "cpu util",
                "left",
                tuple((p.elapsed_s, min(p.cpu_pct, 100.0)) for p in session.process),
            )
        )
        rss_pts = tuple((p.elapsed_s, p.rss / GIB) for p in session.process)
        series.append(Series("rss", "right", rss_pts))
        gb_values.extend(p[1] for p in rss_pts)

    right_hi = float(math.floor(max(gb_values)) + 1) if gb_values else 1.0
    duration_s = max(session.duration_ms, 1) / 1000
    return PlotSpec(
        width_px=960,
        height_px=420,
        title=f"{session.device.name} resource usage",
        series=tuple(series),
        x_range=(0.0, duration_s),
        left_range=(0.0, 100.0),
        right_range=(0.0, right_hi),
        vlines=tuple((m.elapsed_ms / 1000, m.label) for m in session.markers),
        bands=tuple(
            (st.start_ms / 1000, st.end_ms / 1000) for i, st in enumerate(steps) if i % 2 == 0
        ),
        x_label="elapsed (s)",
        left_label="GPU util (%)",
        right_label="memory (GB)",
    )


def render_usage(session: Session, steps: list[Step] | None = None) -> str:
    """Dual-axis usage timeline: GPU util (left, %), memory (right, GB),
    optional CPU/RSS overlay, one labeled vertical line per marker."""
    return render_plot(build_usage_spec(session, steps))


def _fmt_unit(unit: float) -> str:
    if unit >= 1000 and unit % 1000 == 0:
        return f"{int(unit) // 1000}k"
    return f"{unit:g}"


def build_scaling_spec(
    points: list[ScalingPoint],
    fit: ScalingFit,
    unit: float = 100_000.0,
    value_label: str = "value",
) -> PlotSpec:
    if len(points) < 2:
        raise ValueError("need at least two points to plot")
    max_size = max(p.size for p in points)
    max_value = max(p.value for p in points)
    left_hi = float(math.floor(max_value) + 1) if max_value > 0 else 1.0
    return PlotSpec(
        width_px=720,
        height_px=480,
        title=f"{value_label} vs size",
        series=(
            Series("measurements", "left", tuple((p.size, p.value) for p in points)),
        ),
        x_range=(0.0, max_size),
        left_range=(0.0, left_hi),
        fit_line=(fit.slope, fit.intercept),
        x_label="size",
        left_label=value_label,
        annotations=(
            f"slope {unit_cost(fit, unit):.1f} per {_fmt_unit(unit)}",
            f"r2 {fit.r2:.6g}, n {fit.n}",
        ),
        point_marks=True,
    )


def render_scaling(
    points: list[ScalingPoint],
    fit: ScalingFit,
    unit: float = 100_000.0,
    value_label: str = "value",
) -> str:
    """Scatter of measurements plus the fitted trend over their range,
    annotated with the unit cost."""
    return render_plot(build_scaling_spec(points, fit, unit, value_label))


def render_table(rows: list[StepSummary]) -> str:
    """Fixed-width text table of step summaries with a Total row."""
    header = ["step", "runtime_s", "peak_gpu_mem_gb", "peak_cpu_mem_gb", "mean_util_pct", "samples"]
    body = [
        [
            r.label,
            f"{r.runtime_s:g}",
            format_gb(r.peak_gpu_mem_bytes),
            format_gb(r.peak_cpu_mem_bytes),
            "-" if r.mean_gpu_util_pct is None else f"{r.mean_gpu_util_pct:.1f}",
            str(r.sample_count),
        ]
        for r in rows
    ]
    body.append(
        [
            "Total",
            f"{total_runtime_s(rows):g}",
            "-",
            "-",
            "-",
            str(sum(r.sample_count for r in rows)),
        ]
    )
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip(),
        "  ".join("-" * w for w in widths),
    ]
    for row in body:
        cells = [row[0].ljust(widths[0])] + [
            cell.rjust(w) for cell, w in zip(row[1:], widths[1:])
        ]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"
