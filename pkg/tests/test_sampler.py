from __future__ import annotations

import sys
import time

import pytest

from gputrace import (
    DeviceInfo,
    InstantReading,
    ReadFailure,
    SamplerConfig,
    SamplerStopped,
    SimProfile,
    SimSegment,
    SimulatedBackend,
    SpawnFailure,
    UnknownDevice,
    parse_session,
    record_command,
    start,
)
from gputrace.sampler import MARK_FILE_ENV
from gputrace.traceio import read_meta
from gputrace.units import GIB

DEVICE = DeviceInfo(index=0, name="SIM-TEST", memory_total=16 * GIB)


def sim_backend():
    profile = SimProfile(
        segments=(SimSegment(3600.0, 42.0, 2 * GIB, 50.0, 100_000),), device=DEVICE
    )
    return SimulatedBackend(profile)


class FlakyBackend:
    """Fails every second read so the gap-row path gets exercised."""

    def __init__(self):
        self.calls = 0

    def enumerate_devices(self):
        return [DEVICE]

    def read_instant(self, device_index):
        self.calls += 1
        if self.calls % 2 == 0:
            raise ReadFailure("synthetic read failure")
        return InstantReading(42.0, 2 * GIB, DEVICE.memory_total, 50.0, 100_000)

    def close(self):
        pass


class TestLifecycle:
    def test_stop_right_after_start_still_has_a_row(self, tmp_path):
        handle = start(SamplerConfig(output_dir=tmp_path / "s"), backend=sim_backend())
        paths = handle.stop()
        session = parse_session(tmp_path / "s")
        assert len(session.samples) >= 1
        # first tick fires as soon as the poller thread comes up
        assert session.samples[0].elapsed_ms <= 100
        assert paths.metrics_csv.is_file()

    def test_stop_is_idempotent(self, tmp_path):
        handle = start(SamplerConfig(output_dir=tmp_path / "s"), backend=sim_backend())
        first = handle.stop()
        second = handle.stop()
        assert first == second

    def test_cadence_bounds(self, tmp_path):
        config = SamplerConfig(output_dir=tmp_path / "s", period=0.2)
        handle = start(config, backend=sim_backend())
        time.sleep(1.0)
        handle.stop()
        session = parse_session(tmp_path / "s")
        n = len(session.samples)
        assert 5 <= n <= 7
        elapsed = [s.elapsed_ms for s in session.samples]
        assert elapsed == sorted(set(elapsed))

    def test_first_two_rows_period_apart(self, tmp_path):
        handle = start(
            SamplerConfig(output_dir=tmp_path / "s", period=0.5), backend=sim_backend()
        )
        time.sleep(1.2)
        handle.stop()
        session = parse_session(tmp_path / "s")
        gap = session.samples[1].elapsed_ms - session.samples[0].elapsed_ms
        assert 300 <= gap <= 700

    def test_period_zero_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            SamplerConfig(output_dir=tmp_path / "s", period=0)

    def test_no_rows_after_stop_returns(self, tmp_path):
        config = SamplerConfig(output_dir=tmp_path / "s", period=0.05)
        handle = start(config, backend=sim_backend())
        time.sleep(0.2)
        paths = handle.stop()
        sizes = (paths.metrics_csv.stat().st_size, paths.events_csv.stat().st_size)
        time.sleep(0.2)
        assert (paths.metrics_csv.stat().st_size, paths.events_csv.stat().st_size) == sizes

    def test_unknown_device_index(self, tmp_path):
        with pytest.raises(UnknownDevice):
            start(
                SamplerConfig(output_dir=tmp_path / "s", device_index=7),
                backend=sim_backend(),
            )

    def test_unwritable_output_dir(self, tmp_path):
        blocker = tmp_path / "not-a-dir"
        blocker.write_text("file in the way")
        from gputrace import OutputNotWritable

        with pytest.raises(OutputNotWritable):
            start(
                SamplerConfig(output_dir=blocker / "session"), backend=sim_backend()
            )


class TestMark:
    def test_marks_keep_call_order(self, tmp_path):
        handle = start(SamplerConfig(output_dir=tmp_path / "s"), backend=sim_backend())
        handle.mark("kernel_start")
        handle.mark("kernel_end")
        handle.stop()
        session = parse_session(tmp_path / "s")
        assert [m.label for m in session.markers] == ["kernel_start", "kernel_end"]
        assert session.markers[0].elapsed_ms <= session.markers[1].elapsed_ms

    def test_thousand_marks_nondecreasing(self, tmp_path):
        handle = start(SamplerConfig(output_dir=tmp_path / "s"), backend=sim_backend())
        for i in range(1000):
            handle.mark(f"m{i}")
        handle.stop()
        session = parse_session(tmp_path / "s")
        assert len(session.markers) == 1000
        assert [m.label for m in session.markers] == [f"m{i}" for i in range(1000)]
        stamps = [m.elapsed_ms for m in session.markers]
        assert stamps == sorted(stamps)
        assert all(0 <= t <= session.duration_ms for t in stamps)

    def test_label_with_comma_and_quote_round_trips(self, tmp_path):
        handle = start(SamplerConfig(output_dir=tmp_path / "s"), backend=sim_backend())
        tricky = 'pca, "projected"'
        handle.mark(tricky)
        handle.stop()
        session = parse_session(tmp_path / "s")
        assert session.markers[0].label == tricky

    def test_empty_label_rejected(self, tmp_path):
        handle = start(SamplerConfig(output_dir=tmp_path / "s"), backend=sim_backend())
        try:
            with pytest.raises(ValueError):
                handle.mark("")
        finally:
            handle.stop()

    def test_mark_after_stop(self, tmp_path):
        handle = start(SamplerConfig(output_dir=tmp_path / "s"), backend=sim_backend())
        handle.stop()
        with pytest.raises(SamplerStopped):
            handle.mark("late")


class TestGapRows:
    def test_failed_reads_become_gap_rows(self, tmp_path):
        config = SamplerConfig(output_dir=tmp_path / "s", period=0.05)
        handle = start(config, backend=FlakyBackend())
        time.sleep(0.45)
        paths = handle.stop()
        session = parse_session(tmp_path / "s")
        gaps = [s for s in session.samples if s.is_gap]
        values = [s for s in session.samples if not s.is_gap]
        assert gaps and values
        assert all(s.gpu_util_pct is None and s.mem_used_bytes is None for s in gaps)
        meta, diagnostics = read_meta(paths.meta_file)
        assert any(d.startswith("read_failures=") for d in diagnostics)


class TestRecordCommand:
    def test_child_exit_status_in_meta(self, tmp_path):
        config = SamplerConfig(output_dir=tmp_path / "s", period=0.1)
        paths = record_command(config, [sys.executable, "-c", "import time; time.sleep(0.3)"],
                               backend=sim_backend())
        meta, _ = read_meta(paths.meta_file)
        assert meta["child_exit_status"] == "0"
        session = parse_session(tmp_path / "s")
        assert session.duration_ms >= 250

    def test_nonzero_child_exit_is_recorded_not_raised(self, tmp_path):
        config = SamplerConfig(output_dir=tmp_path / "s", period=0.1)
        paths = record_command(
            config, [sys.executable, "-c", "raise SystemExit(3)"], backend=sim_backend()
        )
        meta, _ = read_meta(paths.meta_file)
        assert meta["child_exit_status"] == "3"

    def test_child_marks_arrive_via_control_file(self, tmp_path):
        script = (
            "import os, time\n"
            f"path = os.environ[{MARK_FILE_ENV!r}]\n"
            "with open(path, 'a') as f:\n"
            "    f.write('phase1\\n')\n"
            "time.sleep(0.2)\n"
            "with open(path, 'a') as f:\n"
            "    f.write('phase2\\n')\n"
        )
        config = SamplerConfig(output_dir=tmp_path / "s", period=0.1)
        record_command(config, [sys.executable, "-c", script], backend=sim_backend())
        session = parse_session(tmp_path / "s")
        assert [m.label for m in session.markers] == ["phase1", "phase2"]

    def test_empty_argv_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            record_command(
                SamplerConfig(output_dir=tmp_path / "s"), [], backend=sim_backend()
            )

    def test_spawn_failure_still_finalizes_session(self, tmp_path):
        config = SamplerConfig(output_dir=tmp_path / "s", period=0.1)
        with pytest.raises(SpawnFailure):
            record_command(config, ["/no/such/binary"], backend=sim_backend())
        meta, _ = read_meta(tmp_path / "s" / "meta.txt")
        assert "stop_wall_utc" in meta

    def test_monitor_process_writes_process_csv(self, tmp_path):
        config = SamplerConfig(output_dir=tmp_path / "s", period=0.1)
        paths = record_command(
            config,
            [sys.executable, "-c", "import time; time.sleep(0.4)"],
            backend=sim_backend(),
            monitor_process=True,
        )
        assert paths.process_csv is not None and paths.process_csv.is_file()
        session = parse_session(tmp_path / "s")
        assert session.process is not None
        assert len(session.process) >= 1
        assert session.process[0].cpu_pct == 0.0
