"""Synthetic sessions from plain-text profile descriptions.

A profile file scripts a device as consecutive piecewise-constant
segments, one per line, with optional marker lines:

    # comment
    duration_s,gpu_util_pct,mem_used_gb,temp_c,power_w
    mark,<elapsed_s>,<label>

Example (60 s idle then a 5 s burst, with two markers)::

    60,5,10,35,80
    5,95,101.3,70,650
    mark,0,load
    mark,60,compute

:func:`write_synthetic_session` samples such a profile on a fixed grid
and writes a complete session directory in the standard format. Ticks
run at 0, p, 2p, ... strictly below the profile duration; the session
length itself is carried by the meta file's wall-clock stamps, which
are exactly ``duration`` apart. The result parses like any recorded
session, which is how the whole analysis stack is exercised without
hardware.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Sequence

from . import traceio
from .backend import DeviceInfo, SimProfile, SimSegment
from .errors import ProfileParseError
from .traceio import EventMarker, Sample, TracePaths
from .units import GIB, gb_to_bytes

__all__ = [
    "DEFAULT_DEVICE",
    "ProfileSpec",
    "parse_profile",
    "load_profile",
    "write_synthetic_session",
]

DEFAULT_DEVICE = DeviceInfo(index=0, name="SIM-H200", memory_total=140 * GIB)


@dataclass(frozen=True)
class ProfileSpec:
    """A parsed profile file: the device script plus its marker list."""

    profile: SimProfile
    marks: tuple[EventMarker, ...]


def parse_profile(
    text: str, device: DeviceInfo = DEFAULT_DEVICE, source: str = "<profile>"
) -> ProfileSpec:
    """Parse a profile description. Blank lines and ``#`` comments are
    ignored; marker labels may contain commas."""
    segments: list[SimSegment] = []
    raw_marks: list[tuple[float, str, int]] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(",")
        if fields[0] == "mark":
            if len(fields) < 3:
                raise ProfileParseError(
                    f"{source}:{line_no}: mark lines need 'mark,<elapsed_s>,<label>'"
                )
            try:
                elapsed_s = float(fields[1])
            except ValueError as exc:
                raise ProfileParseError(
                    f"{source}:{line_no}: bad mark time {fields[1]!r}"
                ) from exc
            label = ",".join(fields[2:])
            if not label:
                raise ProfileParseError(f"{source}:{line_no}: empty mark label")
            if elapsed_s < 0:
                raise ProfileParseError(f"{source}:{line_no}: negative mark time")
            raw_marks.append((elapsed_s, label, line_no))
            continue
        if len(fields) != 5:
            raise ProfileParseError(
                f"{source}:{line_no}: segment lines need 5 fields "
                f"(duration_s,gpu_util_pct,mem_used_gb,temp_c,power_w), got {len(fields)}"
            )
        try:
            duration_s, util, mem_gb, temp, power_w = (float(f) for f in fields)
            segments.append(
                SimSegment(
                    duration_s=duration_s,
                    gpu_utilization=util,
                    memory_used=gb_to_bytes(mem_gb),
                    temperature=temp,
                    power_draw=round(power_w * 1000),
                )
            )
        except ValueError as exc:
            raise ProfileParseError(f"{source}:{line_no}: {exc}") from exc
    if not segments:
        raise ProfileParseError(f"{source}: no segment lines found")
    try:
        profile = SimProfile(segments=tuple(segments), device=device)
    except ValueError as exc:
        raise ProfileParseError(f"{source}: {exc}") from exc
    total_s = profile.duration_s
    for elapsed_s, label, line_no in raw_marks:
        if elapsed_s > total_s:
            raise ProfileParseError(
                f"{source}:{line_no}: mark at {elapsed_s} s is beyond the "
                f"profile duration {total_s} s"
            )
    marks = tuple(
        EventMarker(elapsed_ms=round(e * 1000), label=label)
        for e, label, _ in sorted(raw_marks, key=lambda m: m[0])
    )
    return ProfileSpec(profile=profile, marks=marks)


def load_profile(path: Path, device: DeviceInfo = DEFAULT_DEVICE) -> ProfileSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ProfileParseError(f"cannot read profile {path}: {exc}") from exc
    return parse_profile(text, device=device, source=str(path))


def write_synthetic_session(
    directory: Path,
    profile: SimProfile,
    marks: Sequence[EventMarker] = (),
    period: float = 1.0,
    start_wall: datetime | None = None,
) -> TracePaths:
    """Sample ``profile`` every ``period`` seconds into a session directory.

    The sample grid covers [0, duration) half-open, matching the
    profile's own segment semantics; markers must lie within
    [0, duration]. The resulting directory is indistinguishable from a
    live recording with an always-healthy backend.
    """
    if period <= 0:
        raise ValueError(f"period must be > 0, got {period}")
    directory = Path(directory)
    duration_ms = round(profile.duration_s * 1000)
    period_ms = max(1, round(period * 1000))
    device = profile.device

    ordered = sorted(marks, key=lambda m: m.elapsed_ms)
    if ordered and ordered[-1].elapsed_ms > duration_ms:
        raise ValueError(
            f"marker at {ordered[-1].elapsed_ms} ms is beyond the session "
            f"duration {duration_ms} ms"
        )

    samples = []
    for t in range(0, duration_ms, period_ms):
        reading = profile.reading_at(t / 1000)
        samples.append(
            Sample(
                elapsed_ms=t,
                device_index=device.index,
                gpu_util_pct=reading.gpu_utilization,
                mem_used_bytes=reading.memory_used,
                mem_total_bytes=reading.memory_total,
                temperature_c=reading.temperature,
                power_mw=reading.power_draw,
            )
        )

    if start_wall is None:
        start_wall = datetime.now(timezone.utc)
    stop_wall = start_wall + timedelta(milliseconds=duration_ms)
    meta = {
        "schema_version": traceio.SCHEMA_VERSION,
        "start_wall_utc": start_wall.isoformat(),
        "stop_wall_utc": stop_wall.isoformat(),
        "period_s": str(period),
        "device_index": str(device.index),
        "device_name": device.name,
        "device_mem_total_bytes": str(device.memory_total),
    }

    directory.mkdir(parents=True, exist_ok=True)
    traceio.write_metrics_csv(directory / traceio.METRICS_FILENAME, samples)
    traceio.write_events_csv(directory / traceio.EVENTS_FILENAME, ordered)
    traceio.write_meta(directory / traceio.META_FILENAME, meta)
    return traceio.session_paths(directory)
