"""Background metric sampling with event markers.

The lifecycle is: :func:`start` launches a poller thread that writes one
metrics row per tick, the workload calls :meth:`SamplerHandle.mark` to
timestamp its phases, and :meth:`SamplerHandle.stop` joins the poller
and finalizes the session directory. :func:`record_command` wraps the
whole lifecycle around a child process and lets that child (or any
sibling) append markers through a control file named in its
environment.

Scheduling targets the absolute grid t0 + k*period on the monotonic
clock, so long sessions do not drift. A tick that arrives late is taken
immediately and the schedule continues on the original grid. One sample
is always taken right at t0, which keeps even degenerate sessions
non-empty. A failed read becomes a gap row (timestamp and device index
only), preserving cadence evidence for the parser.
"""

from __future__ import annotations

import os
import subprocess
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import traceio
from .backend import DeviceInfo, NvmlBackend
from .errors import (
    OutputNotWritable,
    ReadFailure,
    SamplerStopped,
    SpawnFailure,
    UnknownDevice,
)
from .traceio import EventMarker, Sample, TracePaths

__all__ = [
    "SamplerConfig",
    "SamplerHandle",
    "start",
    "record_command",
    "SESSION_DIR_ENV",
    "MARK_FILE_ENV",
]

SESSION_DIR_ENV = "GPUTRACE_SESSION_DIR"
MARK_FILE_ENV = "GPUTRACE_MARK_FILE"

# How often record_command checks the child and drains the control file.
_TAIL_INTERVAL_S = 0.02


@dataclass(frozen=True)
class SamplerConfig:
    """Sampling parameters. ``period`` is in seconds and must be positive."""

    output_dir: Path
    period: float = 1.0
    device_index: int = 0

    def __post_init__(self) -> None:
        if self.period <= 0:
            raise ValueError(f"period must be > 0, got {self.period}")
        object.__setattr__(self, "output_dir", Path(self.output_dir))


class SamplerHandle:
    """A running (or stopped) sampling session.

    ``mark`` and ``stop`` may be called from any thread; marker rows are
    appended atomically and ordered by call receipt. ``stop`` is
    idempotent and blocks until the poller thread has fully exited, so
    no file grows after it returns.
    """

    def __init__(
        self,
        config: SamplerConfig,
        backend,
        device: DeviceInfo,
        session_dir: Path,
        start_wall_time: datetime,
        start_mono: float,
    ) -> None:
        self.config = config
        self.session_dir = session_dir
        self.start_wall_time = start_wall_time
        self.start_mono = start_mono
        self.state = "running"

        self._backend = backend
        self._device = device
        self._lock = threading.Lock()
        self._stop_event = threading.Event()
        self._diagnostics: list[str] = []
        self._read_failures = 0
        self._child_exit_status: int | None = None
        self._result: TracePaths | None = None
        self._last_metric_ms = -1

        self._metrics_file = open(
            session_dir / traceio.METRICS_FILENAME, "w", newline="", encoding="utf-8"
        )
        self._metrics_writer = traceio.make_csv_writer(self._metrics_file)
        self._metrics_writer.writerow(traceio.METRICS_HEADER)
        self._events_file = open(
            session_dir / traceio.EVENTS_FILENAME, "w", newline="", encoding="utf-8"
        )
        self._events_writer = traceio.make_csv_writer(self._events_file)
        self._events_writer.writerow(traceio.EVENTS_HEADER)
        self._events_file.flush()
        # Control file for out-of-process marks; created empty so the
        # exported path always exists.
        self.mark_file = session_dir / traceio.MARKS_FILENAME
        self.mark_file.touch()

        self._write_meta()
        self._thread = threading.Thread(target=self._poll_loop, name="gputrace-poller", daemon=True)
        self._thread.start()

    # -- public API -------------------------------------------------

    def elapsed_ms(self) -> int:
        return round((time.monotonic() - self.start_mono) * 1000)

    def mark(self, label: str) -> None:
        """Append one marker row stamped at call receipt."""
        if not label:
            raise ValueError("marker label must be non-empty")
        with self._lock:
            if self.state != "running":
                raise SamplerStopped("mark() called after stop()")
            marker = EventMarker(elapsed_ms=self.elapsed_ms(), label=label)
            self._events_writer.writerow(traceio.event_fields(marker))
            self._events_file.flush()

    def stop(self) -> TracePaths:
        """Stop the poller, flush and close all files, return the paths."""
        with self._lock:
            if self.state == "stopped":
                assert self._result is not None
                return self._result
            self.state = "stopped"
        self._stop_event.set()
        self._thread.join()
        if self._read_failures:
            self._diagnostics.append(f"read_failures={self._read_failures}")
        self._write_meta(stopped=True)
        self._metrics_file.close()
        self._events_file.close()
        self._result = traceio.session_paths(self.session_dir)
        return self._result

    def __enter__(self) -> "SamplerHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    # -- internals ---------------------------------------------------

    def _write_meta(self, stopped: bool = False) -> None:
        meta = {
            "schema_version": traceio.SCHEMA_VERSION,
            "start_wall_utc": self.start_wall_time.isoformat(),
            "period_s": str(self.config.period),
            "device_index": str(self.config.device_index),
            "device_name": self._device.name,
            "device_mem_total_bytes": str(self._device.memory_total),
        }
        if stopped:
            meta["stop_wall_utc"] = datetime.now(timezone.utc).isoformat()
        if self._child_exit_status is not None:
            meta["child_exit_status"] = str(self._child_exit_status)
        traceio.write_meta(self.session_dir / traceio.META_FILENAME, meta, self._diagnostics)

    def _poll_loop(self) -> None:
        period = self.config.period
        k = 0
        while not self._stop_event.is_set():
            deadline = self.start_mono + k * period
            delay = deadline - time.monotonic()
            if delay > 0 and self._stop_event.wait(delay):
                break
            self._take_sample()
            k += 1

    def _take_sample(self) -> None:
        now_ms = self.elapsed_ms()
        try:
            reading = self._backend.read_instant(self.config.device_index)
            sample = Sample(
                elapsed_ms=now_ms,
                device_index=self.config.device_index,
                gpu_util_pct=reading.gpu_utilization,
                mem_used_bytes=reading.memory_used,
                mem_total_bytes=reading.memory_total,
                temperature_c=reading.temperature,
                power_mw=reading.power_draw,
            )
        except ReadFailure:
            self._read_failures += 1
            sample = Sample(now_ms, self.config.device_index, None, None, None, None, None)
        except Exception as exc:  # backend bug: record and stop polling
            self._diagnostics.append(f"poller aborted: {exc!r}")
            self._stop_event.set()
            return
        # Catch-up ticks can land in the same millisecond; nudge forward
        # to keep timestamps strictly increasing.
        if sample.elapsed_ms <= self._last_metric_ms:
            sample = Sample(
                self._last_metric_ms + 1,
                sample.device_index,
                sample.gpu_util_pct,
                sample.mem_used_bytes,
                sample.mem_total_bytes,
                sample.temperature_c,
                sample.power_mw,
            )
        self._last_metric_ms = sample.elapsed_ms
        self._metrics_writer.writerow(traceio.metric_fields(sample))
        self._metrics_file.flush()


def start(config: SamplerConfig, backend=None) -> SamplerHandle:
    """Begin sampling ``config.device_index`` into ``config.output_dir``.

    ``backend`` defaults to the real NVML backend; pass a
    :class:`~gputrace.backend.SimulatedBackend` to run without hardware.
    """
    if backend is None:
        backend = NvmlBackend()
    devices = {d.index: d for d in backend.enumerate_devices()}
    device = devices.get(config.device_index)
    if device is None:
        raise UnknownDevice(
            f"device index {config.device_index} not found "
            f"(available: {sorted(devices) or 'none'})"
        )
    try:
        config.output_dir.mkdir(parents=True, exist_ok=True)
        probe = config.output_dir / traceio.METRICS_FILENAME
        with open(probe, "w", encoding="utf-8"):
            pass
    except OSError as exc:
        raise OutputNotWritable(f"cannot write to {config.output_dir}: {exc}") from exc
    return SamplerHandle(
        config=config,
        backend=backend,
        device=device,
        session_dir=config.output_dir,
        start_wall_time=datetime.now(timezone.utc),
        start_mono=time.monotonic(),
    )


class _MarkFileTail:
    """Incremental reader of the newline-delimited marker control file."""

    def __init__(self, path: Path) -> None:
        self._path = path
        self._offset = 0
        self._partial = b""

    def drain(self, final: bool = False) -> list[str]:
        try:
            with open(self._path, "rb") as f:
                f.seek(self._offset)
                chunk = f.read()
                self._offset = f.tell()
        except OSError:
            return []
        data = self._partial + chunk
        lines = data.split(b"\n")
        self._partial = lines.pop()
        if final and self._partial:
            lines.append(self._partial)
            self._partial = b""
        labels = []
        for raw in lines:
            label = raw.decode("utf-8", "replace").rstrip("\r")
            if label:
                labels.append(label)
        return labels


def record_command(
    config: SamplerConfig,
    argv: list[str],
    backend=None,
    monitor_process: bool = False,
) -> TracePaths:
    """Run ``argv`` under sampling and return the trace paths.

    The child sees ``GPUTRACE_SESSION_DIR`` and ``GPUTRACE_MARK_FILE`` in
    its environment; labels it appends to the mark file become event
    markers, stamped when the tail loop observes them. The child's exit
    status lands in the meta file; a nonzero status is not an error.
    With ``monitor_process=True`` the child's CPU and RSS are sampled at
    the same period into process.csv (stopped after the sampler, so its
    series covers the whole session).
    """
    if not argv:
        raise ValueError("argv must be non-empty")
    handle = start(config, backend=backend)
    child: subprocess.Popen | None = None
    proc_samples = []
    proc_stop = threading.Event()
    proc_thread: threading.Thread | None = None
    try:
        env = dict(os.environ)
        env[SESSION_DIR_ENV] = str(handle.session_dir)
        env[MARK_FILE_ENV] = str(handle.mark_file)
        try:
            child = subprocess.Popen(argv, env=env)
        except OSError as exc:
            raise SpawnFailure(f"cannot spawn {argv[0]!r}: {exc}") from exc

        if monitor_process:
            from .procmon import sample_process

            def _monitor() -> None:
                proc_samples.extend(
                    sample_process(child.pid, period=config.period, stop_signal=proc_stop)
                )

            proc_thread = threading.Thread(target=_monitor, name="gputrace-procmon", daemon=True)
            proc_thread.start()

        tail = _MarkFileTail(handle.mark_file)
        while child.poll() is None:
            for label in tail.drain():
                handle.mark(label)
            time.sleep(_TAIL_INTERVAL_S)
        for label in tail.drain(final=True):
            handle.mark(label)
    finally:
        # Shutdown order: child first, then the sampler, then the
        # process monitor, so both series span the child's lifetime.
        if child is not None:
            if child.poll() is None:
                child.terminate()
                try:
                    child.wait(timeout=5)
                except subprocess.TimeoutExpired:
                    child.kill()
                    child.wait()
            handle._child_exit_status = child.returncode
        paths = handle.stop()
        proc_stop.set()
        if proc_thread is not None:
            proc_thread.join()

    if monitor_process:
        from .procmon import write_process_csv

        process_csv = handle.session_dir / traceio.PROCESS_FILENAME
        write_process_csv(process_csv, proc_samples)
        paths = traceio.session_paths(handle.session_dir, with_process=True)
    return paths
