"""The ``gputrace`` command line.

Subcommands: record a command under sampling, mark an event from a
child or sibling process, monitor a PID's CPU/RSS, parse and validate a
session, parse a top batch log, render reports, fit scaling curves, and
generate synthetic sessions from profile files.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 environment error (no device, no library, unwritable output, missing
process). Diagnostics go to stderr; data goes to files or stdout.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import threading
from pathlib import Path

from . import analysis, procmon, report, sampler, simulate, trace, traceio
from .backend import DeviceInfo, NvmlBackend, SimProfile, SimSegment, SimulatedBackend
from .errors import (
    BackendUnavailable,
    CorruptRow,
    DegenerateInput,
    EmptySession,
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
from .units import GIB, gb_to_bytes

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ENV = 3

_DATA_ERRORS = (
    MissingFile,
    SchemaMismatch,
    CorruptRow,
    NoMarkers,
    EmptySession,
    MalformedSnapshot,
    ProfileParseError,
    DegenerateInput,
    NonPositiveInput,
    PeakExceedsCapacity,
    SamplerStopped,
)
_ENV_ERRORS = (
    BackendUnavailable,
    UnknownDevice,
    ReadFailure,
    OutputNotWritable,
    SpawnFailure,
    NoSuchProcess,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; this CLI reserves 2 for data errors.
    def error(self, message):
        raise _UsageError(message)


def _sim_backend() -> SimulatedBackend:
    """Scripted fallback device for GPU-less machines: a short busy
    burst against the default simulated card, repeating its last
    segment forever."""
    device = simulate.DEFAULT_DEVICE
    profile = SimProfile(
        segments=(
            SimSegment(5.0, 10.0, 2 * GIB, 35.0, 80_000),
            SimSegment(5.0, 80.0, 30 * GIB, 55.0, 420_000),
            SimSegment(5.0, 95.0, 60 * GIB, 70.0, 640_000),
            SimSegment(5.0, 60.0, 40 * GIB, 60.0, 500_000),
        ),
        device=device,
    )
    return SimulatedBackend(profile)


def _make_backend(choice: str):
    if choice == "nvml":
        return NvmlBackend()
    if choice == "sim":
        return _sim_backend()
    backend = NvmlBackend()
    try:
        backend.enumerate_devices()
        return backend
    except BackendUnavailable as exc:
        print(f"gputrace: falling back to simulated backend ({exc})", file=sys.stderr)
        return _sim_backend()


# -- subcommand handlers -------------------------------------------------


def _cmd_record(args) -> int:
    command = list(args.command)
    if command and command[0] == "--":
        command = command[1:]
    if not command:
        raise _UsageError("no command given after 'record' flags (use: record [flags] -- cmd...)")
    config = sampler.SamplerConfig(
        output_dir=Path(args.out), period=args.period, device_index=args.device
    )
    backend = _make_backend(args.backend)
    try:
        paths = sampler.record_command(
            config, command, backend=backend, monitor_process=args.monitor_process
        )
    finally:
        backend.close()
    meta, _ = traceio.read_meta(paths.meta_file)
    status = meta.get("child_exit_status", "unknown")
    print(f"gputrace: child exit status {status}", file=sys.stderr)
    print(args.out)
    return EXIT_OK


def _cmd_mark(args) -> int:
    label = args.label
    if not label or "\n" in label:
        raise _UsageError("label must be non-empty and single-line")
    mark_file = os.environ.get(sampler.MARK_FILE_ENV)
    if not mark_file:
        session_dir = os.environ.get(sampler.SESSION_DIR_ENV)
        if not session_dir:
            raise NoSuchProcess(
                f"no active session: neither {sampler.MARK_FILE_ENV} nor "
                f"{sampler.SESSION_DIR_ENV} is set"
            )
        mark_file = str(Path(session_dir) / traceio.MARKS_FILENAME)
    try:
        with open(mark_file, "a", encoding="utf-8") as f:
            f.write(label + "\n")
    except OSError as exc:
        raise OutputNotWritable(f"cannot append to {mark_file}: {exc}") from exc
    return EXIT_OK


def _cmd_procmon(args) -> int:
    stop = threading.Event()
    samples: list = []
    failure: list[BaseException] = []

    def _run() -> None:
        try:
            samples.extend(procmon.sample_process(args.pid, args.period, stop))
        except BaseException as exc:  # re-raised on the main thread
            failure.append(exc)

    worker = threading.Thread(target=_run, daemon=True)
    worker.start()
    try:
        while worker.is_alive():
            worker.join(0.2)
    except KeyboardInterrupt:
        stop.set()
        worker.join()
    if failure:
        raise failure[0]
    traceio.write_process_csv(Path(args.out), samples)
    print(f"gputrace: wrote {len(samples)} samples to {args.out}", file=sys.stderr)
    return EXIT_OK


def _cmd_parse(args) -> int:
    session = trace.parse_session(Path(args.dir), strict=not args.lenient)
    line = (
        f"ok: {len(session.samples)} samples, {len(session.markers)} markers, "
        f"duration {session.duration_ms / 1000:g} s"
    )
    if session.skipped_rows:
        line += f", {session.skipped_rows} corrupt rows skipped"
    print(line)
    return EXIT_OK


def _cmd_parse_top(args) -> int:
    if args.file == "-":
        text = sys.stdin.read()
    else:
        path = Path(args.file)
        if not path.is_file():
            raise MissingFile(f"missing top batch file: {path}")
        text = path.read_text(encoding="utf-8")
    result = procmon.parse_top_batch(text, interval=args.interval, pid=args.pid)
    writer = traceio.make_csv_writer(sys.stdout)
    writer.writerow(traceio.PROCESS_HEADER)
    for sample in result.samples:
        writer.writerow(traceio.process_fields(sample))
    if result.skipped:
        print(f"gputrace: skipped {result.skipped} snapshot(s)", file=sys.stderr)
    return EXIT_OK


def _open_out(target: str):
    if target == "-":
        return sys.stdout, False
    return open(target, "w", encoding="utf-8", newline=""), True


def _cmd_report(args) -> int:
    session = trace.parse_session(Path(args.dir))
    wants_table = args.table is not None or (args.steps_csv is None and args.plot is None)
    if wants_table or args.steps_csv is not None:
        summaries = trace.summarize_steps(session)
    if wants_table:
        text = report.render_table(summaries)
        stream, owned = _open_out(args.table if args.table is not None else "-")
        stream.write(text)
        if owned:
            stream.close()
    if args.steps_csv is not None:
        stream, owned = _open_out(args.steps_csv)
        trace.write_steps_csv(stream, summaries)
        if owned:
            stream.close()
    if args.plot is not None:
        document = report.render_usage(session)
        stream, owned = _open_out(args.plot)
        stream.write(document)
        if owned:
            stream.close()
    return EXIT_OK


_METRIC_LABELS = {"runtime": "runtime (s)", "peak_gpu_mem": "peak GPU mem (GB)"}


def _session_point(directory: Path, size: float, metric: str) -> analysis.ScalingPoint:
    session = trace.parse_session(directory)
    if metric == "runtime":
        value = session.duration_ms / 1000
    else:
        peak = trace.peak_gpu_memory(session)
        if peak is None:
            raise EmptySession(f"{directory}: no memory samples to take a peak from")
        value = peak / GIB
    return analysis.ScalingPoint(size=size, value=value)


def _cmd_scaling(args) -> int:
    sizes = list(args.size or [])
    points: list[analysis.ScalingPoint] = []
    for item in args.inputs:
        path = Path(item)
        if path.is_dir():
            if not sizes:
                raise _UsageError(
                    "session directory inputs need --size (one per directory, in order)"
                )
            points.append(_session_point(path, sizes.pop(0), args.metric))
        else:
            points.extend(analysis.read_points_csv(path))
    if sizes:
        raise _UsageError(f"{len(sizes)} --size value(s) left over without a directory")

    fit = analysis.fit_linear(points)
    cost = analysis.unit_cost(fit, args.unit)
    print(f"points={fit.n} r2={fit.r2:.6g}")
    print(f"intercept={fit.intercept:.6g}")
    print(f"unit_cost={cost:.6g} per {args.unit:g}")
    for size in args.extrapolate or []:
        ex = analysis.extrapolate(fit, size)
        flag = " (extrapolated)" if ex.extrapolated else ""
        size_text = str(int(size)) if size == int(size) else f"{size:g}"
        print(f"at {size_text}: {ex.value:.6g}{flag}")
    if args.plot is not None:
        document = report.render_scaling(
            points, fit, unit=args.unit, value_label=_METRIC_LABELS[args.metric]
        )
        stream, owned = _open_out(args.plot)
        stream.write(document)
        if owned:
            stream.close()
    return EXIT_OK


def _cmd_simulate(args) -> int:
    device = simulate.DEFAULT_DEVICE
    if args.mem_total_gb is not None:
        device = DeviceInfo(
            index=device.index, name=device.name, memory_total=gb_to_bytes(args.mem_total_gb)
        )
    spec = simulate.load_profile(Path(args.profile), device=device)
    simulate.write_synthetic_session(
        Path(args.out), spec.profile, spec.marks, period=args.period
    )
    print(args.out)
    return EXIT_OK


# -- parser wiring --------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(
        prog="gputrace",
        description="Record and analyze GPU/CPU resource usage traces.",
    )
    sub = parser.add_subparsers(dest="subcommand", metavar="command", required=True)

    p = sub.add_parser("record", help="run a command under metric sampling")
    p.add_argument("--period", type=float, default=1.0, help="sampling period in seconds")
    p.add_argument("--device", type=int, default=0, help="device index")
    p.add_argument("--out", required=True, help="session output directory")
    p.add_argument("--backend", choices=("auto", "nvml", "sim"), default="auto")
    p.add_argument(
        "--monitor-process",
        action="store_true",
        help="also sample the child's CPU%% and RSS into process.csv",
    )
    p.add_argument("command", nargs=argparse.REMAINDER, help="command to run (after --)")
    p.set_defaults(func=_cmd_record)

    p = sub.add_parser("mark", help="append an event marker to the active session")
    p.add_argument("label")
    p.set_defaults(func=_cmd_mark)

    p = sub.add_parser("procmon", help="sample a process's CPU%% and RSS")
    p.add_argument("--pid", type=int, required=True)
    p.add_argument("--period", type=float, default=1.0)
    p.add_argument("--out", required=True, help="output CSV file")
    p.set_defaults(func=_cmd_procmon)

    p = sub.add_parser("parse", help="validate a session directory")
    p.add_argument("dir")
    p.add_argument("--lenient", action="store_true", help="skip corrupt rows instead of aborting")
    p.set_defaults(func=_cmd_parse)

    p = sub.add_parser("parse-top", help="convert a top batch log to process CSV")
    p.add_argument("file", help="top batch output, or - for stdin")
    p.add_argument("--interval", type=float, default=1.0, help="top -d delay the log used")
    p.add_argument("--pid", type=int, default=None, help="only this PID's rows")
    p.set_defaults(func=_cmd_parse_top)

    p = sub.add_parser("report", help="per-step summaries and usage plot")
    p.add_argument("dir")
    p.add_argument("--table", default=None, help="write text table to file (- for stdout)")
    p.add_argument("--steps-csv", default=None, help="write step summaries CSV (- for stdout)")
    p.add_argument("--plot", default=None, help="write usage timeline SVG (- for stdout)")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("scaling", help="linear fit over per-size measurements")
    p.add_argument("inputs", nargs="+", metavar="dir-or-csv")
    p.add_argument("--metric", choices=("runtime", "peak_gpu_mem"), default="runtime")
    p.add_argument("--unit", type=float, default=100_000.0, help="size increment for unit cost")
    p.add_argument(
        "--size",
        type=float,
        action="append",
        help="workload size for each directory input, in order",
    )
    p.add_argument("--extrapolate", type=float, action="append", metavar="SIZE")
    p.add_argument("--plot", default=None, help="write scaling chart SVG (- for stdout)")
    p.set_defaults(func=_cmd_scaling)

    p = sub.add_parser("simulate", help="write a synthetic session from a profile file")
    p.add_argument("--profile", required=True, help="profile description file")
    p.add_argument("--out", required=True, help="session output directory")
    p.add_argument("--period", type=float, default=1.0, help="sampling period in seconds")
    p.add_argument(
        "--mem-total-gb", type=float, default=None, help="simulated device memory (GB)"
    )
    p.set_defaults(func=_cmd_simulate)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, format="gputrace: %(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"gputrace: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"gputrace: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"gputrace: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _DATA_ERRORS as exc:
        print(f"gputrace: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except _ENV_ERRORS as exc:
        print(f"gputrace: error: {exc}", file=sys.stderr)
        return EXIT_ENV
