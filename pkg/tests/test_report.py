from __future__ import annotations

import xml.etree.ElementTree as ET

import pytest

from gputrace import (
    DeviceInfo,
    EmptySession,
    EventMarker,
    Sample,
    ScalingPoint,
    Series,
    Session,
    StepSummary,
    build_scaling_spec,
    build_usage_spec,
    fit_linear,
    render_scaling,
    render_table,
    render_usage,
    summarize_steps,
    y_to_px,
)
from gputrace.report import MARGIN_TOP, render_plot, x_to_px
from gputrace.traceio import ProcSample
from gputrace.units import GIB, gb_to_bytes
from helpers import PEAK_GB, PIPELINE_DURATION_S, linear_points

DEVICE = DeviceInfo(index=0, name="SIM-R", memory_total=16 * GIB)

RUNTIME_POINTS = [ScalingPoint(s, v) for s, v in linear_points(100_000, 64.1, 1_000_000, 151.8)]
MEMORY_POINTS = [ScalingPoint(s, v) for s, v in linear_points(100_000, 11.5, 1_000_000, 102.5)]


def mk_sample(t_ms, mem=GIB, util=10.0):
    if mem is None and util is None:
        return Sample(t_ms, 0, None, None, None, None, None)
    return Sample(t_ms, 0, util, mem, DEVICE.memory_total, 40.0, 100_000)


def mk_session(samples, markers=(), duration_ms=None, process=None):
    if duration_ms is None:
        last_s = samples[-1].elapsed_ms if samples else 0
        last_m = markers[-1].elapsed_ms if markers else 0
        duration_ms = max(last_s, last_m)
    return Session(
        device=DEVICE,
        samples=tuple(samples),
        markers=tuple(markers),
        duration_ms=duration_ms,
        meta={},
        process=tuple(process) if process is not None else None,
    )


def elements(svg: str, cls: str) -> list[ET.Element]:
    root = ET.fromstring(svg)
    return [el for el in root.iter() if el.get("class") == cls]


class TestUsagePlot:
    def test_byte_deterministic(self, pipeline_session):
        assert render_usage(pipeline_session) == render_usage(pipeline_session)

    def test_well_formed_xml(self, pipeline_session):
        svg = render_usage(pipeline_session)
        root = ET.fromstring(svg)
        assert root.tag.endswith("svg")
        assert svg.startswith('<?xml version="1.0" encoding="UTF-8"?>\n')

    def test_one_marker_line_per_marker(self, pipeline_session):
        svg = render_usage(pipeline_session)
        assert len(elements(svg, "marker-line")) == len(pipeline_session.markers)
        assert len(elements(svg, "marker-label")) == len(pipeline_session.markers)

    def test_axis_ranges(self, pipeline_session):
        spec = build_usage_spec(pipeline_session)
        assert spec.x_range == (0.0, float(PIPELINE_DURATION_S))
        assert spec.left_range == (0.0, 100.0)
        # right axis tops out at the next whole GB above the peak
        assert spec.right_range == (0.0, 102.0)

    def test_peak_lands_at_the_right_pixel(self, pipeline_session):
        spec = build_usage_spec(pipeline_session)
        svg = render_usage(pipeline_session)
        (mem_line,) = [
            el
            for el in ET.fromstring(svg).iter()
            if el.get("class") == "series-gpu-mem" and el.tag.endswith("polyline")
        ]
        ys = [float(pair.split(",")[1]) for pair in mem_line.get("points").split()]
        assert min(ys) == pytest.approx(y_to_px(spec, PEAK_GB, "right"), abs=0.02)

    def test_half_of_the_steps_get_bands(self, pipeline_session):
        svg = render_usage(pipeline_session)
        assert len(elements(svg, "step-band")) == 5  # even-indexed of 10 steps

    def test_label_escaping(self):
        label = 'a & b < "c"'
        session = mk_session([mk_sample(0), mk_sample(1000)], [EventMarker(0, label)])
        svg = render_usage(session)
        assert "&amp;" in svg
        (text,) = elements(svg, "marker-label")
        assert text.text == label

    def test_crowded_labels_rotate(self, pipeline_session):
        svg = render_usage(pipeline_session)
        labels = elements(svg, "marker-label")
        rotated = [t for t in labels if (t.get("transform") or "").startswith("rotate(90")]
        # regress/pca/knn sit a second or two apart: no room horizontally
        assert rotated
        assert len(rotated) < len(labels)

    def test_gap_rows_split_the_polyline(self):
        session = mk_session(
            [
                mk_sample(0),
                mk_sample(1000),
                mk_sample(2000, mem=None, util=None),
                mk_sample(3000),
                mk_sample(4000),
            ]
        )
        svg = render_usage(session)
        util_lines = [
            el
            for el in ET.fromstring(svg).iter()
            if el.get("class") == "series-gpu-util" and el.tag.endswith("polyline")
        ]
        assert len(util_lines) == 2

    def test_isolated_point_renders_as_circle(self):
        session = mk_session(
            [
                mk_sample(0, mem=None, util=None),
                mk_sample(1000),
                mk_sample(2000, mem=None, util=None),
            ]
        )
        svg = render_usage(session)
        dots = [
            el
            for el in ET.fromstring(svg).iter()
            if el.get("class") == "series-gpu-util" and el.tag.endswith("circle")
        ]
        assert len(dots) == 1

    def test_process_overlay_present_and_clamped(self):
        session = mk_session(
            [mk_sample(0), mk_sample(1000)],
            process=[ProcSample(0.5, 150.0, 2 * GIB)],
        )
        spec = build_usage_spec(session)
        svg = render_usage(session)
        assert len(spec.series) == 4
        (cpu_dot,) = [
            el for el in ET.fromstring(svg).iter() if el.get("class") == "series-cpu-util"
        ]
        # 150% CPU is clamped to the top of the fixed [0, 100] axis
        assert float(cpu_dot.get("cy")) == pytest.approx(MARGIN_TOP, abs=0.01)

    def test_empty_session_rejected(self):
        session = mk_session([], [EventMarker(0, "a")], duration_ms=1000)
        with pytest.raises(EmptySession):
            build_usage_spec(session)

    def test_usage_without_markers_has_no_vlines(self):
        svg = render_usage(mk_session([mk_sample(0), mk_sample(1000)]))
        assert elements(svg, "marker-line") == []


class TestScalingPlot:
    def test_byte_deterministic(self):
        fit = fit_linear(RUNTIME_POINTS)
        assert render_scaling(RUNTIME_POINTS, fit) == render_scaling(RUNTIME_POINTS, fit)

    def test_scatter_and_trend_counts(self):
        fit = fit_linear(RUNTIME_POINTS)
        svg = render_scaling(RUNTIME_POINTS, fit)
        ET.fromstring(svg)
        assert len(elements(svg, "point")) == len(RUNTIME_POINTS)
        assert len(elements(svg, "trend")) == 1

    def test_trend_spans_the_measured_sizes(self):
        fit = fit_linear(RUNTIME_POINTS)
        spec = build_scaling_spec(RUNTIME_POINTS, fit)
        svg = render_scaling(RUNTIME_POINTS, fit)
        (trend,) = elements(svg, "trend")
        assert float(trend.get("x1")) == pytest.approx(x_to_px(spec, 100_000), abs=0.01)
        assert float(trend.get("x2")) == pytest.approx(x_to_px(spec, 1_000_000), abs=0.01)

    def test_flat_fit_draws_horizontal_trend(self):
        points = [ScalingPoint(float(s), 5.0) for s in (1, 2, 3)]
        fit = fit_linear(points)
        svg = render_scaling(points, fit)
        (trend,) = elements(svg, "trend")
        assert trend.get("y1") == trend.get("y2")

    def test_annotations_show_unit_cost(self):
        fit = fit_linear(MEMORY_POINTS)
        svg = render_scaling(MEMORY_POINTS, fit, value_label="peak GB")
        notes = [t.text for t in elements(svg, "annotation")]
        assert "slope 10.1 per 100k" in notes
        assert "r2 1, n 10" in notes

    def test_runtime_annotation(self):
        fit = fit_linear(RUNTIME_POINTS)
        svg = render_scaling(RUNTIME_POINTS, fit)
        notes = [t.text for t in elements(svg, "annotation")]
        assert "slope 9.7 per 100k" in notes

    def test_too_few_points(self):
        fit = fit_linear(RUNTIME_POINTS)
        with pytest.raises(ValueError):
            build_scaling_spec([RUNTIME_POINTS[0]], fit)


class TestRenderPlot:
    def test_right_axis_series_needs_right_range(self):
        from gputrace import PlotSpec

        with pytest.raises(ValueError):
            PlotSpec(
                width_px=100,
                height_px=100,
                title="t",
                series=(Series("m", "right", ((0.0, 1.0),)),),
                x_range=(0.0, 1.0),
                left_range=(0.0, 1.0),
            )

    def test_title_escaped(self):
        from gputrace import PlotSpec

        spec = PlotSpec(
            width_px=200,
            height_px=200,
            title="a < b",
            series=(Series("s", "left", ((0.0, 0.5), (1.0, 0.7))),),
            x_range=(0.0, 1.0),
            left_range=(0.0, 1.0),
        )
        svg = render_plot(spec)
        (title,) = elements(svg, "title")
        assert title.text == "a < b"


class TestRenderTable:
    def test_pipeline_table(self, pipeline_session):
        text = render_table(summarize_steps(pipeline_session))
        lines = text.splitlines()
        assert lines[0].split() == [
            "step",
            "runtime_s",
            "peak_gpu_mem_gb",
            "peak_cpu_mem_gb",
            "mean_util_pct",
            "samples",
        ]
        assert set(lines[1]) == {"-", " "}
        by_label = {line.split()[0]: line.split() for line in lines[2:]}
        assert by_label["load"][1] == "62"
        assert by_label["norm_hvg"][2] == "101.3"
        assert by_label["Total"][1] == "152"
        assert lines[-1].startswith("Total")

    def test_deterministic(self, pipeline_session):
        rows = summarize_steps(pipeline_session)
        assert render_table(rows) == render_table(rows)

    def test_empty_rows_total_zero(self):
        lines = render_table([]).splitlines()
        assert len(lines) == 3
        assert lines[2].split() == ["Total", "0", "-", "-", "-", "0"]

    def test_single_row(self):
        row = StepSummary("load", 62.0, gb_to_bytes(11.5), None, 10.0, 62)
        lines = render_table([row]).splitlines()
        assert lines[2].split() == ["load", "62", "11.5", "-", "10.0", "62"]
        assert lines[3].split() == ["Total", "62", "-", "-", "-", "62"]

    def test_no_trailing_whitespace(self, pipeline_session):
        text = render_table(summarize_steps(pipeline_session))
        for line in text.splitlines():
            assert line == line.rstrip()
