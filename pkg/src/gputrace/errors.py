"""Exception hierarchy for gputrace.

Grouped by how the CLI maps them to exit codes: environment problems
(missing driver/device/process, unwritable output), data problems
(unparseable or inconsistent trace files, bad analysis input), and
sampler state errors. Plain ``ValueError`` is reserved for violated
call preconditions (bad period, empty label, empty argv).
"""

from __future__ import annotations


class GpuTraceError(Exception):
    """Base class for all gputrace errors."""


# -- environment --------------------------------------------------------


class BackendUnavailable(GpuTraceError):
    """The NVML library could not be loaded or initialized."""


class UnknownDevice(GpuTraceError):
    """Device index not present in the backend's enumeration."""


class ReadFailure(GpuTraceError):
    """A metric read failed mid-session; the sampler records a gap row."""


class OutputNotWritable(GpuTraceError):
    """The session output directory cannot be created or written."""


class SpawnFailure(GpuTraceError):
    """The child command could not be started."""


class NoSuchProcess(GpuTraceError):
    """The monitored PID did not exist when monitoring started."""


# -- sampler state ------------------------------------------------------


class SamplerStopped(GpuTraceError):
    """mark() was called on a handle that is no longer running."""


# -- trace / profile data -----------------------------------------------


class MissingFile(GpuTraceError):
    """A required session file is absent."""


class SchemaMismatch(GpuTraceError):
    """Unknown schema version or unexpected CSV header."""


class CorruptRow(GpuTraceError):
    """A data row failed to parse or violated an ordering invariant.

    ``path`` and ``line_no`` (1-based, header included) locate the row.
    """

    def __init__(self, message: str, path: str | None = None, line_no: int | None = None):
        self.path = path
        self.line_no = line_no
        where = f"{path}:{line_no}: " if path is not None and line_no is not None else ""
        super().__init__(f"{where}{message}")


class NoMarkers(GpuTraceError):
    """Step attribution requires at least one event marker."""


class EmptySession(GpuTraceError):
    """The session contains no samples to render."""


class MalformedSnapshot(GpuTraceError):
    """A top batch snapshot could not be parsed (skipped and tallied)."""


class ProfileParseError(GpuTraceError):
    """A simulation profile description file is invalid."""


# -- analysis -----------------------------------------------------------


class DegenerateInput(GpuTraceError):
    """Fit input has fewer than two distinct sizes."""


class NonPositiveInput(GpuTraceError):
    """Ratio inputs must be strictly positive."""


class PeakExceedsCapacity(GpuTraceError):
    """Headroom peak is larger than the stated capacity."""
