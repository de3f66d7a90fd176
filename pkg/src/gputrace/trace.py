"""Load session directories and attribute samples to workflow steps.

A Session is an immutable view of one recorded run. Step attribution
follows the marker rule: each interval between consecutive markers
belongs to the first marker, the last marker owns the tail up to the
session end, and intervals are half-open [start, end) so a sample on a
boundary belongs to the later step. Samples recorded before the first
marker are kept under an implicit "(pre)" step when present, since
startup cost is still cost.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

from . import traceio
from .backend import DeviceInfo
from .errors import CorruptRow, NoMarkers, SchemaMismatch
from .traceio import EventMarker, ProcSample, Sample, TracePaths

__all__ = [
    "Session",
    "Step",
    "StepSummary",
    "PRE_STEP_LABEL",
    "parse_session",
    "write_session",
    "attribute_steps",
    "summarize_steps",
    "peak_gpu_memory",
    "total_runtime_s",
    "write_steps_csv",
    "STEPS_HEADER",
]

logger = logging.getLogger(__name__)

PRE_STEP_LABEL = "(pre)"

STEPS_HEADER = [
    "label",
    "runtime_s",
    "peak_gpu_mem_bytes",
    "peak_cpu_mem_bytes",
    "mean_gpu_util_pct",
    "sample_count",
]


@dataclass(frozen=True)
class Session:
    """One parsed session: device, sample series, markers, and provenance.

    ``duration_ms`` is the session length: the largest of the wall-clock
    start/stop difference, the last sample time, and the last marker
    time. ``meta`` holds the meta file's key/value pairs verbatim so a
    re-serialized session is byte-identical. ``skipped_rows`` counts
    rows dropped by lenient parsing.
    """

    device: DeviceInfo
    samples: tuple[Sample, ...]
    markers: tuple[EventMarker, ...]
    duration_ms: int
    meta: dict[str, str]
    process: tuple[ProcSample, ...] | None = None
    paths: TracePaths | None = None
    meta_diagnostics: tuple[str, ...] = ()
    skipped_rows: int = 0

    def __post_init__(self) -> None:
        for prev, cur in zip(self.samples, self.samples[1:]):
            if cur.elapsed_ms <= prev.elapsed_ms:
                raise ValueError(
                    f"sample timestamps must be strictly increasing "
                    f"({prev.elapsed_ms} then {cur.elapsed_ms})"
                )
        for prev, cur in zip(self.markers, self.markers[1:]):
            if cur.elapsed_ms < prev.elapsed_ms:
                raise ValueError("marker timestamps must be nondecreasing")
        if self.process is not None:
            for prev, cur in zip(self.process, self.process[1:]):
                if cur.elapsed_s < prev.elapsed_s:
                    raise ValueError("process timestamps must be nondecreasing")
        if self.samples and self.duration_ms < self.samples[-1].elapsed_ms:
            raise ValueError("duration_ms is before the last sample")
        if self.markers and self.duration_ms < self.markers[-1].elapsed_ms:
            raise ValueError("duration_ms is before the last marker")


@dataclass(frozen=True)
class Step:
    """A half-open labeled interval [start_ms, end_ms)."""

    label: str
    start_ms: int
    end_ms: int

    def __post_init__(self) -> None:
        if self.start_ms >= self.end_ms:
            raise ValueError(f"step must have start_ms < end_ms, got [{self.start_ms}, {self.end_ms})")


@dataclass(frozen=True)
class StepSummary:
    """Per-step aggregate. Peaks and the mean are None when no in-step
    sample carried the corresponding value."""

    label: str
    runtime_s: float
    peak_gpu_mem_bytes: int | None
    peak_cpu_mem_bytes: int | None
    mean_gpu_util_pct: float | None
    sample_count: int


def _wall_duration_ms(meta: dict[str, str]) -> int | None:
    start = meta.get("start_wall_utc")
    stop = meta.get("stop_wall_utc")
    if not start or not stop:
        return None
    try:
        delta = datetime.fromisoformat(stop) - datetime.fromisoformat(start)
    except ValueError:
        return None
    return round(delta.total_seconds() * 1000)


def _device_from_meta(meta: dict[str, str], path: Path) -> DeviceInfo:
    for key in ("device_index", "device_name", "device_mem_total_bytes"):
        if key not in meta:
            raise SchemaMismatch(f"{path}: meta file lacks required key {key!r}")
    try:
        return DeviceInfo(
            index=int(meta["device_index"]),
            name=meta["device_name"],
            memory_total=int(meta["device_mem_total_bytes"]),
        )
    except ValueError as exc:
        raise CorruptRow(f"bad device fields in meta: {exc}", str(path)) from exc


def parse_session(directory: Path, strict: bool = True) -> Session:
    """Load a session directory into a Session.

    In strict mode (default) a corrupt row aborts with its file and
    line number. In lenient mode corrupt metrics/events rows are
    skipped and tallied in ``skipped_rows``; process.csv is always read
    strictly since it is optional in the first place.
    """
    directory = Path(directory)
    meta_path = directory / traceio.META_FILENAME
    meta, diagnostics = traceio.read_meta(meta_path)
    version = meta.get("schema_version")
    if version != traceio.SCHEMA_VERSION:
        raise SchemaMismatch(
            f"{meta_path}: schema_version {version!r} is not {traceio.SCHEMA_VERSION!r}"
        )
    device = _device_from_meta(meta, meta_path)

    skipped = 0
    samples: list[Sample] = []
    metrics_path = directory / traceio.METRICS_FILENAME
    with traceio.open_csv_for_read(metrics_path) as f:
        reader = csv.reader(f)
        header = next(reader, None)
        traceio.check_header(header, traceio.METRICS_HEADER, metrics_path)
        for line_no, fields in enumerate(reader, start=2):
            if not fields:
                continue
            try:
                sample = traceio.parse_metric_fields(fields, str(metrics_path), line_no)
                if samples and sample.elapsed_ms <= samples[-1].elapsed_ms:
                    raise CorruptRow(
                        "timestamps not strictly increasing", str(metrics_path), line_no
                    )
            except CorruptRow:
                if strict:
                    raise
                skipped += 1
                continue
            samples.append(sample)

    markers: list[EventMarker] = []
    events_path = directory / traceio.EVENTS_FILENAME
    with traceio.open_csv_for_read(events_path) as f:
        reader = csv.reader(f)
        header = next(reader, None)
        traceio.check_header(header, traceio.EVENTS_HEADER, events_path)
        for line_no, fields in enumerate(reader, start=2):
            if not fields:
                continue
            try:
                marker = traceio.parse_event_fields(fields, str(events_path), line_no)
                if markers and marker.elapsed_ms < markers[-1].elapsed_ms:
                    raise CorruptRow(
                        "marker timestamps went backwards", str(events_path), line_no
                    )
            except CorruptRow:
                if strict:
                    raise
                skipped += 1
                continue
            markers.append(marker)

    process_path = directory / traceio.PROCESS_FILENAME
    process = tuple(traceio.read_process_csv(process_path)) if process_path.is_file() else None

    candidates = [0]
    if samples:
        candidates.append(samples[-1].elapsed_ms)
    if markers:
        candidates.append(markers[-1].elapsed_ms)
    wall = _wall_duration_ms(meta)
    if wall is not None:
        candidates.append(wall)

    return Session(
        device=device,
        samples=tuple(samples),
        markers=tuple(markers),
        duration_ms=max(candidates),
        meta=meta,
        process=process,
        paths=traceio.session_paths(directory, with_process=process is not None),
        meta_diagnostics=tuple(diagnostics),
        skipped_rows=skipped,
    )


def write_session(directory: Path, session: Session) -> TracePaths:
    """Serialize a Session back to a directory, byte-identical for a
    session this package wrote."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    traceio.write_metrics_csv(directory / traceio.METRICS_FILENAME, session.samples)
    traceio.write_events_csv(directory / traceio.EVENTS_FILENAME, session.markers)
    traceio.write_meta(
        directory / traceio.META_FILENAME, session.meta, session.meta_diagnostics
    )
    if session.process is not None:
        traceio.write_process_csv(directory / traceio.PROCESS_FILENAME, session.process)
    return traceio.session_paths(directory, with_process=session.process is not None)


def attribute_steps(session: Session) -> list[Step]:
    """Tile [first marker, session end) into labeled steps.

    Duplicate marker timestamps produce zero-length intervals; those are
    dropped with a logged diagnostic so the report stays total. The
    "(pre)" step covering [0, first marker) appears only when samples
    exist in that range.
    """
    if not session.markers:
        raise NoMarkers("session has no event markers")
    steps: list[Step] = []
    first_start = session.markers[0].elapsed_ms
    if any(s.elapsed_ms < first_start for s in session.samples):
        steps.append(Step(PRE_STEP_LABEL, 0, first_start))
    for i, marker in enumerate(session.markers):
        end = (
            session.markers[i + 1].elapsed_ms
            if i + 1 < len(session.markers)
            else session.duration_ms
        )
        if marker.elapsed_ms == end:
            logger.warning(
                "dropping zero-length step %r at %d ms", marker.label, marker.elapsed_ms
            )
            continue
        steps.append(Step(marker.label, marker.elapsed_ms, end))
    return steps


def summarize_steps(session: Session) -> list[StepSummary]:
    """One aggregate row per step, Table-style.

    Peaks are per-step maxima over the half-open interval, not running
    maxima; a step whose memory falls below an earlier step's peak
    reports the lower value. Gap rows count toward nothing.
    """
    summaries = []
    for step in attribute_steps(session):
        in_step = [s for s in session.samples if step.start_ms <= s.elapsed_ms < step.end_ms]
        mem = [s.mem_used_bytes for s in in_step if s.mem_used_bytes is not None]
        util = [s.gpu_util_pct for s in in_step if s.gpu_util_pct is not None]
        cpu_peak = None
        if session.process is not None:
            rss = [
                p.rss
                for p in session.process
                if step.start_ms <= round(p.elapsed_s * 1000) < step.end_ms
            ]
            cpu_peak = max(rss) if rss else None
        summaries.append(
            StepSummary(
                label=step.label,
                runtime_s=(step.end_ms - step.start_ms) / 1000,
                peak_gpu_mem_bytes=max(mem) if mem else None,
                peak_cpu_mem_bytes=cpu_peak,
                mean_gpu_util_pct=sum(util) / len(util) if util else None,
                sample_count=len(in_step),
            )
        )
    return summaries


def peak_gpu_memory(session: Session) -> int | None:
    """Session-wide maximum of mem_used_bytes, None if never observed."""
    values = [s.mem_used_bytes for s in session.samples if s.mem_used_bytes is not None]
    return max(values) if values else None


def total_runtime_s(summaries: list[StepSummary]) -> float:
    return sum(s.runtime_s for s in summaries)


def write_steps_csv(stream, summaries: list[StepSummary]) -> None:
    """Write step summaries as CSV to a text stream (header included)."""
    w = traceio.make_csv_writer(stream)
    w.writerow(STEPS_HEADER)
    for s in summaries:
        w.writerow(
            [
                s.label,
                str(s.runtime_s),
                "" if s.peak_gpu_mem_bytes is None else str(s.peak_gpu_mem_bytes),
                "" if s.peak_cpu_mem_bytes is None else str(s.peak_cpu_mem_bytes),
                "" if s.mean_gpu_util_pct is None else str(s.mean_gpu_util_pct),
                str(s.sample_count),
            ]
        )
