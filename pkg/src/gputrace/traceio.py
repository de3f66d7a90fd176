"""Session file formats: row schemas, CSV codecs, and the meta file.

Everything that writes or reads a session directory goes through this
module, so a trace produced by the live sampler, the synthetic session
writer, or re-serialization of a parsed session is byte-identical for
identical content.

Layout of a session directory::

    metrics.csv   elapsed_ms,device_index,gpu_util_pct,mem_used_bytes,
                  mem_total_bytes,temperature_c,power_mw
    events.csv    elapsed_ms,label
    process.csv   elapsed_ms,cpu_pct,rss_bytes          (optional)
    meta.txt      line-oriented key=value pairs
    marks.txt     newline-delimited labels appended by child processes

Timestamps are integer milliseconds of monotonic elapsed time since
sampler start; the wall-clock anchor lives only in meta.txt. Gap rows
(failed reads) keep their timestamp and device index but leave every
metric field empty. Floats are serialized with ``str()``, which
round-trips exactly, and parsing then re-serializing any file this
module wrote reproduces it byte for byte.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import CorruptRow, MissingFile, SchemaMismatch

SCHEMA_VERSION = "1"

METRICS_FILENAME = "metrics.csv"
EVENTS_FILENAME = "events.csv"
PROCESS_FILENAME = "process.csv"
META_FILENAME = "meta.txt"
MARKS_FILENAME = "marks.txt"

METRICS_HEADER = [
    "elapsed_ms",
    "device_index",
    "gpu_util_pct",
    "mem_used_bytes",
    "mem_total_bytes",
    "temperature_c",
    "power_mw",
]
EVENTS_HEADER = ["elapsed_ms", "label"]
PROCESS_HEADER = ["elapsed_ms", "cpu_pct", "rss_bytes"]

# meta.txt keys, in canonical write order; "diagnostic" repeats last.
META_KEY_ORDER = [
    "schema_version",
    "start_wall_utc",
    "stop_wall_utc",
    "period_s",
    "device_index",
    "device_name",
    "device_mem_total_bytes",
    "child_exit_status",
]
DIAGNOSTIC_KEY = "diagnostic"


@dataclass(frozen=True)
class Sample:
    """One metrics.csv row. Metric fields are None on gap rows."""

    elapsed_ms: int
    device_index: int
    gpu_util_pct: float | None
    mem_used_bytes: int | None
    mem_total_bytes: int | None
    temperature_c: float | None
    power_mw: int | None

    def __post_init__(self) -> None:
        if self.elapsed_ms < 0:
            raise ValueError(f"elapsed_ms must be >= 0, got {self.elapsed_ms}")
        if self.gpu_util_pct is not None and not 0.0 <= self.gpu_util_pct <= 100.0:
            raise ValueError(f"gpu_util_pct out of [0, 100]: {self.gpu_util_pct}")
        if (
            self.mem_used_bytes is not None
            and self.mem_total_bytes is not None
            and self.mem_used_bytes > self.mem_total_bytes
        ):
            raise ValueError(
                f"mem_used_bytes {self.mem_used_bytes} exceeds total {self.mem_total_bytes}"
            )

    @property
    def is_gap(self) -> bool:
        return (
            self.gpu_util_pct is None
            and self.mem_used_bytes is None
            and self.mem_total_bytes is None
            and self.temperature_c is None
            and self.power_mw is None
        )


@dataclass(frozen=True)
class EventMarker:
    """One events.csv row: a named timestamp delimiting a workflow phase."""

    elapsed_ms: int
    label: str

    def __post_init__(self) -> None:
        if self.elapsed_ms < 0:
            raise ValueError(f"elapsed_ms must be >= 0, got {self.elapsed_ms}")
        if not self.label:
            raise ValueError("marker label must be non-empty")


@dataclass(frozen=True)
class ProcSample:
    """One process.csv row: CPU percent and resident set size.

    ``elapsed_s`` is seconds since monitoring start. ``cpu_pct`` may
    exceed 100 on multicore processes. ``rss`` is bytes.
    """

    elapsed_s: float
    cpu_pct: float
    rss: int

    def __post_init__(self) -> None:
        if self.elapsed_s < 0:
            raise ValueError(f"elapsed_s must be >= 0, got {self.elapsed_s}")
        if self.cpu_pct < 0:
            raise ValueError(f"cpu_pct must be >= 0, got {self.cpu_pct}")
        if self.rss < 0:
            raise ValueError(f"rss must be >= 0, got {self.rss}")


@dataclass(frozen=True)
class TracePaths:
    """File paths of one recorded session."""

    metrics_csv: Path
    events_csv: Path
    meta_file: Path
    process_csv: Path | None = None


def session_paths(directory: Path, with_process: bool = False) -> TracePaths:
    directory = Path(directory)
    return TracePaths(
        metrics_csv=directory / METRICS_FILENAME,
        events_csv=directory / EVENTS_FILENAME,
        meta_file=directory / META_FILENAME,
        process_csv=directory / PROCESS_FILENAME if with_process else None,
    )


# -- field codecs -------------------------------------------------------


def _fmt(value: float | int | None) -> str:
    return "" if value is None else str(value)


def _opt_float(text: str) -> float | None:
    return None if text == "" else float(text)


def _opt_int(text: str) -> int | None:
    return None if text == "" else int(text)


def metric_fields(sample: Sample) -> list[str]:
    return [
        str(sample.elapsed_ms),
        str(sample.device_index),
        _fmt(sample.gpu_util_pct),
        _fmt(sample.mem_used_bytes),
        _fmt(sample.mem_total_bytes),
        _fmt(sample.temperature_c),
        _fmt(sample.power_mw),
    ]


def parse_metric_fields(fields: Sequence[str], path: str, line_no: int) -> Sample:
    if len(fields) != len(METRICS_HEADER):
        raise CorruptRow(
            f"expected {len(METRICS_HEADER)} fields, got {len(fields)}", path, line_no
        )
    try:
        return Sample(
            elapsed_ms=int(fields[0]),
            device_index=int(fields[1]),
            gpu_util_pct=_opt_float(fields[2]),
            mem_used_bytes=_opt_int(fields[3]),
            mem_total_bytes=_opt_int(fields[4]),
            temperature_c=_opt_float(fields[5]),
            power_mw=_opt_int(fields[6]),
        )
    except ValueError as exc:
        raise CorruptRow(str(exc), path, line_no) from exc


def event_fields(marker: EventMarker) -> list[str]:
    return [str(marker.elapsed_ms), marker.label]


def parse_event_fields(fields: Sequence[str], path: str, line_no: int) -> EventMarker:
    if len(fields) != len(EVENTS_HEADER):
        raise CorruptRow(
            f"expected {len(EVENTS_HEADER)} fields, got {len(fields)}", path, line_no
        )
    try:
        return EventMarker(elapsed_ms=int(fields[0]), label=fields[1])
    except ValueError as exc:
        raise CorruptRow(str(exc), path, line_no) from exc


def process_fields(sample: ProcSample) -> list[str]:
    # elapsed_s is stored in the file as integer milliseconds, like the
    # other row kinds.
    return [str(round(sample.elapsed_s * 1000)), _fmt(sample.cpu_pct), str(sample.rss)]


def parse_process_fields(fields: Sequence[str], path: str, line_no: int) -> ProcSample:
    if len(fields) != len(PROCESS_HEADER):
        raise CorruptRow(
            f"expected {len(PROCESS_HEADER)} fields, got {len(fields)}", path, line_no
        )
    try:
        return ProcSample(
            elapsed_s=int(fields[0]) / 1000,
            cpu_pct=float(fields[1]),
            rss=int(fields[2]),
        )
    except ValueError as exc:
        raise CorruptRow(str(exc), path, line_no) from exc


# -- whole-file helpers --------------------------------------------------


def make_csv_writer(stream: io.TextIOBase) -> "csv._writer":
    # Minimal quoting with bare-\n rows keeps files diffable and stable
    # through parse/re-serialize cycles.
    return csv.writer(stream, lineterminator="\n")


def open_csv_for_read(path: Path) -> io.TextIOWrapper:
    if not path.is_file():
        raise MissingFile(f"missing session file: {path}")
    return open(path, "r", newline="", encoding="utf-8")


def check_header(row: Sequence[str] | None, expected: Sequence[str], path: Path) -> None:
    if row is None or list(row) != list(expected):
        raise SchemaMismatch(
            f"{path}: expected header {','.join(expected)!r}, "
            f"got {','.join(row) if row else '<empty file>'!r}"
        )


def write_metrics_csv(path: Path, samples: Iterable[Sample]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = make_csv_writer(f)
        w.writerow(METRICS_HEADER)
        for s in samples:
            w.writerow(metric_fields(s))


def write_events_csv(path: Path, markers: Iterable[EventMarker]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = make_csv_writer(f)
        w.writerow(EVENTS_HEADER)
        for m in markers:
            w.writerow(event_fields(m))


def write_process_csv(path: Path, samples: Iterable[ProcSample]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = make_csv_writer(f)
        w.writerow(PROCESS_HEADER)
        for s in samples:
            w.writerow(process_fields(s))


def read_process_csv(path: Path) -> list[ProcSample]:
    with open_csv_for_read(path) as f:
        reader = csv.reader(f)
        header = next(reader, None)
        check_header(header, PROCESS_HEADER, path)
        samples: list[ProcSample] = []
        for line_no, fields in enumerate(reader, start=2):
            if not fields:
                continue
            sample = parse_process_fields(fields, str(path), line_no)
            if samples and sample.elapsed_s < samples[-1].elapsed_s:
                raise CorruptRow("elapsed time went backwards", str(path), line_no)
            samples.append(sample)
    return samples


# -- meta file -----------------------------------------------------------


def write_meta(path: Path, meta: dict[str, str], diagnostics: Sequence[str] = ()) -> None:
    """Write meta.txt in canonical key order (diagnostics last, repeatable)."""
    lines = []
    for key in META_KEY_ORDER:
        if key in meta:
            lines.append(f"{key}={meta[key]}")
    for key, value in meta.items():
        if key not in META_KEY_ORDER and key != DIAGNOSTIC_KEY:
            lines.append(f"{key}={value}")
    for diag in diagnostics:
        lines.append(f"{DIAGNOSTIC_KEY}={diag}")
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_meta(path: Path) -> tuple[dict[str, str], list[str]]:
    if not path.is_file():
        raise MissingFile(f"missing session file: {path}")
    meta: dict[str, str] = {}
    diagnostics: list[str] = []
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CorruptRow("meta line is not key=value", str(path), line_no)
        if key == DIAGNOSTIC_KEY:
            diagnostics.append(value)
        else:
            meta[key] = value
    return meta, diagnostics
