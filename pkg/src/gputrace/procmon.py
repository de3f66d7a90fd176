"""CPU-side process monitoring.

Two ways in: parse an existing ``top -b`` batch log into a CPU%/RSS
time series, or sample a live process directly through psutil where
spawning ``top`` is undesirable. Both produce :class:`ProcSample`
series writable as process.csv.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import psutil

from .errors import MalformedSnapshot, NoSuchProcess
from .traceio import ProcSample, read_process_csv, write_process_csv
from .units import GIB, KIB, MIB, TIB

__all__ = [
    "ProcSample",
    "TopParseResult",
    "parse_top_batch",
    "sample_process",
    "peak_rss",
    "write_process_csv",
    "read_process_csv",
]

# RES/VIRT scaling suffixes used by top; a bare number is KiB.
_RES_SUFFIXES = {
    "k": KIB,
    "m": MIB,
    "g": GIB,
    "t": TIB,
    "p": TIB * 1024,
}


@dataclass(frozen=True)
class TopParseResult:
    """Samples extracted from a top batch log plus a skip tally.

    ``skipped`` counts snapshots that produced no sample, either because
    the monitored PID's row was absent (process exited) or because the
    snapshot was unparseable.
    """

    samples: tuple[ProcSample, ...]
    skipped: int


def _parse_res(text: str) -> int:
    """Convert a top memory field (``1572864``, ``1536m``, ``1.5g``) to bytes."""
    text = text.strip()
    if not text:
        raise ValueError("empty memory field")
    suffix = text[-1].lower()
    if suffix in _RES_SUFFIXES:
        return round(float(text[:-1]) * _RES_SUFFIXES[suffix])
    return round(float(text) * KIB)


def _split_snapshots(text: str) -> list[list[str]]:
    snapshots: list[list[str]] = []
    current: list[str] | None = None
    for line in text.splitlines():
        if line.startswith("top - "):
            current = [line]
            snapshots.append(current)
        elif current is not None:
            current.append(line)
    return snapshots


def _extract_sample(lines: list[str], pid: int | None, elapsed_s: float) -> ProcSample:
    """Pull the monitored process's row out of one snapshot.

    Column positions come from the ``PID ... COMMAND`` header by name,
    not fixed offsets, so field-width differences between top builds do
    not matter.
    """
    header_idx = None
    columns: list[str] = []
    for i, line in enumerate(lines):
        tokens = line.split()
        if "PID" in tokens and "COMMAND" in tokens:
            header_idx = i
            columns = tokens
            break
    if header_idx is None:
        raise MalformedSnapshot("no process-table header in snapshot")
    try:
        pid_col = columns.index("PID")
        cpu_col = columns.index("%CPU")
        res_col = columns.index("RES")
    except ValueError as exc:
        raise MalformedSnapshot(f"process-table header lacks a column: {exc}") from exc

    for line in lines[header_idx + 1 :]:
        fields = line.split()
        if len(fields) <= max(pid_col, cpu_col, res_col):
            continue
        if not fields[pid_col].isdigit():
            continue
        if pid is not None and fields[pid_col] != str(pid):
            continue
        try:
            return ProcSample(
                elapsed_s=elapsed_s,
                cpu_pct=float(fields[cpu_col]),
                rss=_parse_res(fields[res_col]),
            )
        except ValueError as exc:
            raise MalformedSnapshot(f"unparseable process row: {exc}") from exc
    raise MalformedSnapshot("monitored PID's row not present in snapshot")


def parse_top_batch(text: str, interval: float = 1.0, pid: int | None = None) -> TopParseResult:
    """Parse concatenated ``top -b`` snapshots into a ProcSample series.

    ``interval`` is the ``-d`` delay the log was captured with; sample
    times are snapshot ordinal times ``interval`` (the header clock is
    too coarse to be useful). With ``pid`` given, only that process's
    row is used; otherwise the first process row per snapshot (the
    usual case for ``top -p PID`` logs). Snapshots that yield no sample
    are skipped and tallied, never fatal. Empty input gives an empty
    series; text with no snapshot boundary at all is an error.
    """
    if interval <= 0:
        raise ValueError(f"interval must be > 0, got {interval}")
    if not text.strip():
        return TopParseResult(samples=(), skipped=0)
    snapshots = _split_snapshots(text)
    if not snapshots:
        raise MalformedSnapshot("no 'top - ' snapshot boundary found in input")
    samples: list[ProcSample] = []
    skipped = 0
    for ordinal, lines in enumerate(snapshots):
        try:
            samples.append(_extract_sample(lines, pid, ordinal * interval))
        except MalformedSnapshot:
            skipped += 1
    return TopParseResult(samples=tuple(samples), skipped=skipped)


def sample_process(pid: int, period: float = 1.0, stop_signal=None) -> list[ProcSample]:
    """Sample a live process's CPU% and RSS until it exits or stop_signal is set.

    The first tick reports cpu_pct 0; later ticks report CPU time delta
    over wall time delta, so values above 100 mean multiple busy cores.
    Ticks target the absolute grid t0 + k*period. A process that
    disappears mid-run ends the series cleanly.
    """
    if period <= 0:
        raise ValueError(f"period must be > 0, got {period}")
    try:
        proc = psutil.Process(pid)
    except psutil.NoSuchProcess as exc:
        raise NoSuchProcess(f"pid {pid} not found") from exc

    samples: list[ProcSample] = []
    t0 = time.monotonic()
    k = 0
    while stop_signal is None or not stop_signal.is_set():
        now_ms = round((time.monotonic() - t0) * 1000)
        try:
            with proc.oneshot():
                if proc.status() == psutil.STATUS_ZOMBIE:
                    break
                cpu = proc.cpu_percent(interval=None)
                rss = proc.memory_info().rss
        except (psutil.NoSuchProcess, psutil.ZombieProcess):
            break
        samples.append(ProcSample(elapsed_s=now_ms / 1000, cpu_pct=cpu, rss=rss))
        k += 1
        delay = (t0 + k * period) - time.monotonic()
        if delay > 0:
            if stop_signal is not None:
                if stop_signal.wait(delay):
                    break
            else:
                time.sleep(delay)
    return samples


def peak_rss(series: list[ProcSample]) -> int:
    """Maximum RSS over the series, 0 for an empty series."""
    return max((s.rss for s in series), default=0)
