"""Sample GPU and CPU resource usage around a workload, align it with
event markers, and turn the result into step summaries, plots, and
scaling fits.

Typical in-process use::

    import gputrace

    handle = gputrace.start(gputrace.SamplerConfig(output_dir="run1", period=0.5))
    handle.mark("load")
    ...  # workload
    paths = handle.stop()

    session = gputrace.parse_session("run1")
    for row in gputrace.summarize_steps(session):
        print(row.label, row.runtime_s, row.peak_gpu_mem_bytes)

The ``gputrace`` command wraps the same operations for shell use; see
``gputrace --help``.
"""

from .analysis import (
    Extrapolation,
    ScalingFit,
    ScalingPoint,
    extrapolate,
    fit_linear,
    headroom,
    read_points_csv,
    speedup,
    unit_cost,
)
from .backend import (
    DeviceInfo,
    InstantReading,
    ManualClock,
    NvmlBackend,
    SimProfile,
    SimSegment,
    SimulatedBackend,
)
from .errors import (
    BackendUnavailable,
    CorruptRow,
    DegenerateInput,
    EmptySession,
    GpuTraceError,
    MalformedSnapshot,
    MissingFile,
    NoMarkers,
    NonPositiveInput,
    NoSuchProcess,
    OutputNotWritable,
    PeakExceedsCapacity,
    ProfileParseError,
    ReadFailure,
    SamplerStopped,
    SchemaMismatch,
    SpawnFailure,
    UnknownDevice,
)
from .procmon import (
    ProcSample,
    TopParseResult,
    parse_top_batch,
    peak_rss,
    read_process_csv,
    sample_process,
    write_process_csv,
)
from .report import (
    PlotSpec,
    Series,
    build_scaling_spec,
    build_usage_spec,
    render_plot,
    render_scaling,
    render_table,
    render_usage,
    x_to_px,
    y_to_px,
)
from .sampler import (
    MARK_FILE_ENV,
    SESSION_DIR_ENV,
    SamplerConfig,
    SamplerHandle,
    record_command,
    start,
)
from .simulate import (
    DEFAULT_DEVICE,
    ProfileSpec,
    load_profile,
    parse_profile,
    write_synthetic_session,
)
from .trace import (
    PRE_STEP_LABEL,
    STEPS_HEADER,
    Session,
    Step,
    StepSummary,
    attribute_steps,
    parse_session,
    peak_gpu_memory,
    summarize_steps,
    total_runtime_s,
    write_session,
    write_steps_csv,
)
from .traceio import EventMarker, Sample, TracePaths
from .units import GIB, bytes_to_gb, format_gb, gb_to_bytes

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # sampling
    "SamplerConfig",
    "SamplerHandle",
    "start",
    "record_command",
    "SESSION_DIR_ENV",
    "MARK_FILE_ENV",
    # backends
    "DeviceInfo",
    "InstantReading",
    "NvmlBackend",
    "SimulatedBackend",
    "SimProfile",
    "SimSegment",
    "ManualClock",
    # trace data
    "Sample",
    "EventMarker",
    "ProcSample",
    "TracePaths",
    "Session",
    "Step",
    "StepSummary",
    "PRE_STEP_LABEL",
    "STEPS_HEADER",
    "parse_session",
    "write_session",
    "attribute_steps",
    "summarize_steps",
    "peak_gpu_memory",
    "total_runtime_s",
    "write_steps_csv",
    # process monitoring
    "TopParseResult",
    "parse_top_batch",
    "sample_process",
    "peak_rss",
    "write_process_csv",
    "read_process_csv",
    # analysis
    "ScalingPoint",
    "ScalingFit",
    "Extrapolation",
    "fit_linear",
    "unit_cost",
    "extrapolate",
    "speedup",
    "headroom",
    "read_points_csv",
    # reporting
    "PlotSpec",
    "Series",
    "render_plot",
    "render_usage",
    "render_scaling",
    "render_table",
    "build_usage_spec",
    "build_scaling_spec",
    "x_to_px",
    "y_to_px",
    # simulation
    "DEFAULT_DEVICE",
    "ProfileSpec",
    "parse_profile",
    "load_profile",
    "write_synthetic_session",
    # units
    "GIB",
    "gb_to_bytes",
    "bytes_to_gb",
    "format_gb",
    # errors
    "GpuTraceError",
    "BackendUnavailable",
    "UnknownDevice",
    "ReadFailure",
    "OutputNotWritable",
    "SpawnFailure",
    "NoSuchProcess",
    "SamplerStopped",
    "MissingFile",
    "SchemaMismatch",
    "CorruptRow",
    "NoMarkers",
    "EmptySession",
    "MalformedSnapshot",
    "ProfileParseError",
    "DegenerateInput",
    "NonPositiveInput",
    "PeakExceedsCapacity",
]
