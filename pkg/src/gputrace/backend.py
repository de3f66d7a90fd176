"""Device metric backends.

Two interchangeable sources of GPU readings sit behind the same small
surface (``enumerate_devices`` / ``read_instant`` / ``close``):

* :class:`NvmlBackend` binds the NVML C library directly via ctypes.
  The library is loaded lazily on first use and shut down when the
  backend is closed, so importing this module is safe on machines
  without a GPU driver.
* :class:`SimulatedBackend` replays a scripted, piecewise-constant
  :class:`SimProfile`. Its clock is injectable, which makes every
  downstream module deterministic to test without hardware.

All readings are validated at construction: a backend can never hand
out a utilization outside [0, 100] or a memory figure above the
device total.
"""

from __future__ import annotations

import ctypes
import threading
import time
from dataclasses import dataclass
from typing import Callable, Sequence

from .errors import BackendUnavailable, ReadFailure, UnknownDevice

__all__ = [
    "DeviceInfo",
    "InstantReading",
    "SimSegment",
    "SimProfile",
    "ManualClock",
    "SimulatedBackend",
    "NvmlBackend",
]


@dataclass(frozen=True)
class DeviceInfo:
    """One enumerated GPU: stable index, marketing name, total memory in bytes."""

    index: int
    name: str
    memory_total: int

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError(f"device index must be >= 0, got {self.index}")
        if self.memory_total <= 0:
            raise ValueError(f"memory_total must be > 0, got {self.memory_total}")


@dataclass(frozen=True)
class InstantReading:
    """A single consistent snapshot of one device.

    Fields mirror what the poller writes per tick: utilization percent,
    memory in bytes, temperature in degrees Celsius, power in milliwatts.
    Invalid combinations are rejected here rather than propagated into
    trace files.
    """

    gpu_utilization: float
    memory_used: int
    memory_total: int
    temperature: float
    power_draw: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.gpu_utilization <= 100.0:
            raise ValueError(f"gpu_utilization out of [0, 100]: {self.gpu_utilization}")
        if self.memory_used < 0 or self.memory_used > self.memory_total:
            raise ValueError(
                f"memory_used must be in [0, memory_total]: "
                f"{self.memory_used} vs {self.memory_total}"
            )
        if self.power_draw < 0:
            raise ValueError(f"power_draw must be >= 0, got {self.power_draw}")


@dataclass(frozen=True)
class SimSegment:
    """One piecewise-constant stretch of a simulated workload."""

    duration_s: float
    gpu_utilization: float
    memory_used: int
    temperature: float
    power_draw: int

    def __post_init__(self) -> None:
        if self.duration_s <= 0:
            raise ValueError(f"segment duration must be > 0, got {self.duration_s}")


@dataclass(frozen=True)
class SimProfile:
    """A scripted device trace: ordered segments plus the device they describe.

    ``reading_at(t)`` evaluates the profile at elapsed time ``t`` seconds.
    Segment boundaries are half-open [start, end); queries past the total
    duration repeat the final segment's values, so a simulated session can
    outlive its script.
    """

    segments: tuple[SimSegment, ...]
    device: DeviceInfo

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValueError("SimProfile needs at least one segment")
        object.__setattr__(self, "segments", tuple(self.segments))
        for seg in self.segments:
            if seg.memory_used > self.device.memory_total:
                raise ValueError(
                    f"segment memory {seg.memory_used} exceeds device total "
                    f"{self.device.memory_total}"
                )

    @property
    def duration_s(self) -> float:
        return sum(seg.duration_s for seg in self.segments)

    def reading_at(self, elapsed_s: float) -> InstantReading:
        if elapsed_s < 0:
            raise ValueError(f"elapsed_s must be >= 0, got {elapsed_s}")
        start = 0.0
        seg = self.segments[-1]
        for candidate in self.segments:
            end = start + candidate.duration_s
            if start <= elapsed_s < end:
                seg = candidate
                break
            start = end
        return InstantReading(
            gpu_utilization=seg.gpu_utilization,
            memory_used=seg.memory_used,
            memory_total=self.device.memory_total,
            temperature=seg.temperature,
            power_draw=seg.power_draw,
        )


class ManualClock:
    """A monotonic clock advanced explicitly, for deterministic tests."""

    def __init__(self, start: float = 0.0) -> None:
        self._now = start

    def advance(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot move a monotonic clock backwards")
        self._now += seconds

    def __call__(self) -> float:
        return self._now


class SimulatedBackend:
    """Deterministic backend replaying one :class:`SimProfile` per device.

    ``clock`` is any zero-argument callable returning monotonic seconds
    (``time.monotonic`` by default, :class:`ManualClock` in tests). Elapsed
    time is measured from backend construction.
    """

    def __init__(
        self,
        profiles: SimProfile | Sequence[SimProfile] = (),
        clock: Callable[[], float] | None = None,
    ) -> None:
        if isinstance(profiles, SimProfile):
            profiles = [profiles]
        self._profiles = {p.device.index: p for p in profiles}
        if len(self._profiles) != len(profiles):
            raise ValueError("duplicate device index in simulated profiles")
        self._clock = clock if clock is not None else time.monotonic
        self._t0 = self._clock()

    def enumerate_devices(self) -> list[DeviceInfo]:
        return [self._profiles[i].device for i in sorted(self._profiles)]

    def read_instant(self, device_index: int) -> InstantReading:
        profile = self._profiles.get(device_index)
        if profile is None:
            raise UnknownDevice(f"no simulated device with index {device_index}")
        return profile.reading_at(self._clock() - self._t0)

    def close(self) -> None:
        pass

    def __enter__(self) -> "SimulatedBackend":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


# -- NVML ---------------------------------------------------------------

_NVML_SUCCESS = 0
_NVML_TEMPERATURE_GPU = 0
_NVML_DEVICE_NAME_BUFFER_SIZE = 96
_NVML_LIBRARY_CANDIDATES = ("libnvidia-ml.so.1", "libnvidia-ml.so")


class _NvmlMemory(ctypes.Structure):
    _fields_ = [
        ("total", ctypes.c_ulonglong),
        ("free", ctypes.c_ulonglong),
        ("used", ctypes.c_ulonglong),
    ]


class _NvmlUtilization(ctypes.Structure):
    _fields_ = [("gpu", ctypes.c_uint), ("memory", ctypes.c_uint)]


class NvmlBackend:
    """Real backend over the NVML C library.

    Initialization is deferred until the first call that needs the
    driver, so constructing the backend never fails on GPU-less hosts;
    the failure surfaces as :class:`BackendUnavailable` from the call
    itself. ``close()`` (or context-manager exit) shuts the library
    down again. One backend instance is meant to serve one sampling
    thread; independent instances are safe side by side because NVML
    reference-counts init/shutdown pairs.
    """

    def __init__(self, library_path: str | None = None) -> None:
        self._library_path = library_path
        self._lib: ctypes.CDLL | None = None
        self._lock = threading.Lock()

    def _ensure(self) -> ctypes.CDLL:
        with self._lock:
            if self._lib is not None:
                return self._lib
            candidates = (
                (self._library_path,) if self._library_path else _NVML_LIBRARY_CANDIDATES
            )
            lib = None
            last_err: Exception | None = None
            for name in candidates:
                try:
                    lib = ctypes.CDLL(name)
                    break
                except OSError as exc:
                    last_err = exc
            if lib is None:
                raise BackendUnavailable(
                    f"NVML library not found (tried {', '.join(candidates)}): {last_err}"
                )
            init = getattr(lib, "nvmlInit_v2", None) or getattr(lib, "nvmlInit", None)
            if init is None:
                raise BackendUnavailable("NVML library has no init entry point")
            rc = init()
            if rc != _NVML_SUCCESS:
                raise BackendUnavailable(f"nvmlInit failed with code {rc}")
            self._lib = lib
            return lib

    def _check(self, rc: int, what: str) -> None:
        if rc != _NVML_SUCCESS:
            raise ReadFailure(f"{what} failed with NVML code {rc}")

    def _handle(self, lib: ctypes.CDLL, index: int) -> ctypes.c_void_p:
        count = ctypes.c_uint(0)
        self._check(lib.nvmlDeviceGetCount_v2(ctypes.byref(count)), "device count")
        if index < 0 or index >= count.value:
            raise UnknownDevice(f"device index {index} out of range (count {count.value})")
        handle = ctypes.c_void_p()
        self._check(
            lib.nvmlDeviceGetHandleByIndex_v2(ctypes.c_uint(index), ctypes.byref(handle)),
            f"handle for device {index}",
        )
        return handle

    def enumerate_devices(self) -> list[DeviceInfo]:
        lib = self._ensure()
        count = ctypes.c_uint(0)
        self._check(lib.nvmlDeviceGetCount_v2(ctypes.byref(count)), "device count")
        devices = []
        for i in range(count.value):
            handle = self._handle(lib, i)
            name = ctypes.create_string_buffer(_NVML_DEVICE_NAME_BUFFER_SIZE)
            self._check(
                lib.nvmlDeviceGetName(handle, name, _NVML_DEVICE_NAME_BUFFER_SIZE),
                f"name of device {i}",
            )
            mem = _NvmlMemory()
            self._check(
                lib.nvmlDeviceGetMemoryInfo(handle, ctypes.byref(mem)),
                f"memory info of device {i}",
            )
            devices.append(
                DeviceInfo(
                    index=i,
                    name=name.value.decode("utf-8", "replace"),
                    memory_total=int(mem.total),
                )
            )
        return devices

    def read_instant(self, device_index: int) -> InstantReading:
        lib = self._ensure()
        handle = self._handle(lib, device_index)
        util = _NvmlUtilization()
        self._check(
            lib.nvmlDeviceGetUtilizationRates(handle, ctypes.byref(util)),
            "utilization rates",
        )
        mem = _NvmlMemory()
        self._check(lib.nvmlDeviceGetMemoryInfo(handle, ctypes.byref(mem)), "memory info")
        temp = ctypes.c_uint(0)
        self._check(
            lib.nvmlDeviceGetTemperature(handle, _NVML_TEMPERATURE_GPU, ctypes.byref(temp)),
            "temperature",
        )
        power = ctypes.c_uint(0)
        self._check(lib.nvmlDeviceGetPowerUsage(handle, ctypes.byref(power)), "power usage")
        return InstantReading(
            gpu_utilization=float(util.gpu),
            memory_used=int(mem.used),
            memory_total=int(mem.total),
            temperature=float(temp.value),
            power_draw=int(power.value),
        )

    def close(self) -> None:
        with self._lock:
            if self._lib is not None:
                try:
                    self._lib.nvmlShutdown()
                finally:
                    self._lib = None

    def __enter__(self) -> "NvmlBackend":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
