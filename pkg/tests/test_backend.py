from __future__ import annotations

import pytest

from gputrace import (
    BackendUnavailable,
    DeviceInfo,
    InstantReading,
    ManualClock,
    NvmlBackend,
    SimProfile,
    SimSegment,
    SimulatedBackend,
    UnknownDevice,
)
from gputrace.units import GIB


def make_profile(device=None):
    device = device or DeviceInfo(index=0, name="SIM-A", memory_total=16 * GIB)
    segments = (
        SimSegment(1.0, 10.0, 1 * GIB, 30.0, 50_000),
        SimSegment(1.0, 50.0, 4 * GIB, 45.0, 200_000),
        SimSegment(1.0, 90.0, 8 * GIB, 70.0, 400_000),
    )
    return SimProfile(segments=segments, device=device)


class TestSimProfile:
    def test_piecewise_values(self):
        profile = make_profile()
        assert profile.reading_at(0.0).gpu_utilization == 10.0
        assert profile.reading_at(0.999).gpu_utilization == 10.0
        assert profile.reading_at(1.0).gpu_utilization == 50.0
        assert profile.reading_at(2.5).memory_used == 8 * GIB

    def test_boundaries_are_half_open(self):
        profile = make_profile()
        # exactly on a boundary belongs to the later segment
        assert profile.reading_at(2.0).gpu_utilization == 90.0

    def test_past_end_extends_last_segment(self):
        profile = make_profile()
        assert profile.reading_at(1000.0).gpu_utilization == 90.0
        assert profile.reading_at(1000.0).memory_used == 8 * GIB

    def test_duration_sums_segments(self):
        assert make_profile().duration_s == 3.0

    def test_needs_a_segment(self):
        device = DeviceInfo(0, "X", GIB)
        with pytest.raises(ValueError):
            SimProfile(segments=(), device=device)

    def test_segment_memory_capped_by_device(self):
        device = DeviceInfo(0, "X", GIB)
        seg = SimSegment(1.0, 10.0, 2 * GIB, 30.0, 0)
        with pytest.raises(ValueError):
            SimProfile(segments=(seg,), device=device)

    def test_negative_elapsed_rejected(self):
        with pytest.raises(ValueError):
            make_profile().reading_at(-0.1)


class TestValidation:
    def test_utilization_range(self):
        with pytest.raises(ValueError):
            InstantReading(101.0, 0, GIB, 30.0, 0)
        with pytest.raises(ValueError):
            InstantReading(-1.0, 0, GIB, 30.0, 0)

    def test_memory_within_total(self):
        with pytest.raises(ValueError):
            InstantReading(0.0, 2 * GIB, GIB, 30.0, 0)

    def test_device_info(self):
        with pytest.raises(ValueError):
            DeviceInfo(-1, "X", GIB)
        with pytest.raises(ValueError):
            DeviceInfo(0, "X", 0)


class TestSimulatedBackend:
    def test_reads_follow_injected_clock(self):
        clock = ManualClock()
        backend = SimulatedBackend(make_profile(), clock=clock)
        assert backend.read_instant(0).gpu_utilization == 10.0
        clock.advance(1.5)
        assert backend.read_instant(0).gpu_utilization == 50.0
        clock.advance(10.0)
        assert backend.read_instant(0).memory_used == 8 * GIB

    def test_enumerates_devices_sorted(self):
        a = DeviceInfo(1, "B", 16 * GIB)
        b = DeviceInfo(0, "A", 16 * GIB)
        backend = SimulatedBackend([make_profile(a), make_profile(b)], clock=ManualClock())
        assert [d.index for d in backend.enumerate_devices()] == [0, 1]
        assert [d.name for d in backend.enumerate_devices()] == ["A", "B"]

    def test_duplicate_indices_rejected(self):
        with pytest.raises(ValueError):
            SimulatedBackend([make_profile(), make_profile()], clock=ManualClock())

    def test_unknown_device(self):
        backend = SimulatedBackend(make_profile(), clock=ManualClock())
        with pytest.raises(UnknownDevice):
            backend.read_instant(3)

    def test_clock_cannot_go_backwards(self):
        with pytest.raises(ValueError):
            ManualClock().advance(-1.0)

    def test_context_manager(self):
        with SimulatedBackend(make_profile(), clock=ManualClock()) as backend:
            assert backend.read_instant(0) is not None


class TestNvmlBackend:
    def test_missing_library_raises_backend_unavailable(self, tmp_path):
        backend = NvmlBackend(library_path=str(tmp_path / "libnowhere.so"))
        with pytest.raises(BackendUnavailable):
            backend.enumerate_devices()

    def test_close_without_init_is_safe(self, tmp_path):
        backend = NvmlBackend(library_path=str(tmp_path / "libnowhere.so"))
        backend.close()
        backend.close()
