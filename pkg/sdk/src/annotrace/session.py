"""Profiler session: operation annotations, library interception, GPU ingestion.

A session owns one process's trace directory. Instrumented threads only
append records to an in-memory buffer; a background flusher turns the
buffer into on-disk chunks once it crosses the flush threshold (20 MiB by
default), keeping serialization off the instrumented threads. Closing the
session drains the buffer, emits per-thread high-level events covering
each thread's activity, and seals the directory with meta.bin.

Timestamps come from the monotonic clock as ns offsets from the session
origin; externally supplied GPU/API records must already be expressed in
that clock domain.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .writer import (
    ACCEL_API,
    BACKEND,
    GPU,
    HIGH_LEVEL,
    OPERATION,
    SIMULATOR,
    ChunkedTraceWriter,
    EventRecord,
    record_cost,
)

DEFAULT_FLUSH_THRESHOLD = 20 * 2**20

LEVELS = {"backend": BACKEND, "simulator": SIMULATOR}
_LEVEL_NAMES = {BACKEND: "backend", SIMULATOR: "simulator"}

GPU_STREAM_BASE_TID = 1000


@dataclass(frozen=True)
class GpuRecord:
    """Externally captured accelerator activity, session-relative ns."""

    kind: str  # "accel_api" or "gpu"
    name: str
    start_ns: int
    duration_ns: int
    stream: int = 0
    correlation: Optional[int] = None
    clock_domain: Optional[int] = None


@dataclass(frozen=True)
class RejectedRecord:
    record: GpuRecord
    reason: str


@dataclass
class SessionCounters:
    """The session's own book-keeping tallies, for cross-checking analyzers."""

    operations: int = 0
    calls: dict = field(default_factory=dict)  # level name -> calls through wrappers
    transitions: dict = field(default_factory=dict)  # level name -> outermost calls

    def snapshot(self) -> dict:
        return {
            "operations": self.operations,
            "calls": dict(self.calls),
            "transitions": dict(self.transitions),
        }


class _ThreadState(threading.local):
    def __init__(self):
        self.tid: Optional[int] = None
        self.op_stack: list = []
        self.wrap_depth: dict = {}


class ProfilerSession:
    """Records one process's cross-stack events into a trace directory."""

    def __init__(
        self,
        out_dir,
        *,
        process_name: str = "main",
        pid: Optional[int] = None,
        clock_domain: int = 1,
        flush_threshold_bytes: int = DEFAULT_FLUSH_THRESHOLD,
        parent: Optional[int] = None,
        fork_ns: Optional[int] = None,
        clock: Callable[[], int] = time.monotonic_ns,
    ):
        self.pid = os.getpid() if pid is None else pid
        self.process_name = process_name
        self.clock_domain = clock_domain
        self.parent = parent
        self.fork_ns = fork_ns
        self._clock = clock
        self._origin = clock()
        self.counters = SessionCounters()

        self._writer = ChunkedTraceWriter(out_dir, clock_domain, flush_threshold_bytes)
        self._threshold = flush_threshold_bytes
        self._buffer: list[EventRecord] = []
        self._buffer_bytes = 0
        self._lock = threading.Lock()
        self._wake = threading.Condition(self._lock)
        self._closing = False
        self._closed = False

        self._thread_state = _ThreadState()
        self._tid_lock = threading.Lock()
        self._next_tid = 0
        self._thread_bounds: dict[int, tuple[int, int]] = {}  # tid -> (first, last)
        self._known_correlations: set[int] = set()

        self._flusher = threading.Thread(target=self._flush_loop, name="annotrace-flush", daemon=True)
        self._flusher.start()

    # -- clock and thread bookkeeping ---------------------------------------

    def now_ns(self) -> int:
        return self._clock() - self._origin

    def _tid(self) -> int:
        state = self._thread_state
        if state.tid is None:
            with self._tid_lock:
                state.tid = self._next_tid
                self._next_tid += 1
        return state.tid

    def _note_thread_activity(self, tid: int, start: int, end: int) -> None:
        bounds = self._thread_bounds.get(tid)
        if bounds is None:
            self._thread_bounds[tid] = (start, end)
        else:
            self._thread_bounds[tid] = (min(bounds[0], start), max(bounds[1], end))

    def _emit(self, record: EventRecord) -> None:
        with self._wake:
            if self._closed:
                raise RuntimeError("session is closed")
            self._buffer.append(record)
            self._buffer_bytes += record_cost(record)
            if self._buffer_bytes >= self._threshold:
                self._wake.notify()

    # -- background flusher ---------------------------------------------------

    def _flush_loop(self) -> None:
        while True:
            with self._wake:
                self._wake.wait_for(lambda: self._closing or self._buffer_bytes >= self._threshold)
                drained = self._buffer
                self._buffer = []
                self._buffer_bytes = 0
                closing = self._closing
            for record in drained:
                self._writer.append(record)
            if closing:
                return

    # -- public API -------------------------------------------------------------

    def operation(self, name: str) -> "_OperationScope":
        """Scoped operation annotation; nests per thread, closes on unwind."""
        return _OperationScope(self, name)

    def wrap_library(self, library, level):
        """Proxy whose callable attributes record `level` events and count
        one high-level transition per outermost call."""
        code = LEVELS.get(level) if isinstance(level, str) else int(level)
        if code not in (BACKEND, SIMULATOR):
            raise ValueError(f"level must be backend or simulator, got {level!r}")
        return LibraryProxy(self, library, code)

    def ingest_gpu_events(self, records: Iterable[GpuRecord]) -> list[RejectedRecord]:
        """Merge externally captured ACCEL_API/GPU records; returns rejects.

        Records must be session-relative and in the session's clock domain;
        accelerator-API records must precede the GPU records that reference
        their correlation ids.
        """
        rejected: list[RejectedRecord] = []
        now = self.now_ns()
        for record in records:
            if record.clock_domain is not None and record.clock_domain != self.clock_domain:
                rejected.append(RejectedRecord(record, "clock domain mismatch"))
                continue
            if record.start_ns < 0 or record.duration_ns < 0 or record.start_ns + record.duration_ns > now:
                rejected.append(RejectedRecord(record, "timestamp outside session span"))
                continue
            if record.kind == "accel_api":
                if record.correlation is not None:
                    self._known_correlations.add(record.correlation)
                self._emit(EventRecord(self.pid, record.stream, ACCEL_API, record.name,
                                       record.start_ns, record.duration_ns, record.correlation))
            elif record.kind == "gpu":
                if record.correlation is not None and record.correlation not in self._known_correlations:
                    rejected.append(RejectedRecord(record, "unknown correlation"))
                    continue
                self._emit(EventRecord(self.pid, GPU_STREAM_BASE_TID + record.stream, GPU, record.name,
                                       record.start_ns, record.duration_ns, record.correlation))
            else:
                rejected.append(RejectedRecord(record, f"unknown kind {record.kind!r}"))
        return rejected

    def close(self, join_ns: Optional[int] = None) -> int:
        """Drain buffers, emit per-thread ambient events, seal the directory.

        Returns the chunk count. Idempotent close is an error; the session
        is single-use.
        """
        if self._closed:
            raise RuntimeError("session already closed")
        # Ambient high-level interpreter events: one per instrumented thread,
        # spanning everything it recorded, so analyzers see wrapped calls
        # start inside high-level code.
        for tid in sorted(self._thread_bounds):
            first, last = self._thread_bounds[tid]
            self._emit(EventRecord(self.pid, tid, HIGH_LEVEL, "script", first, max(last - first, 0)))
        with self._wake:
            self._closing = True
            self._closed = True
            self._wake.notify()
        self._flusher.join()
        return self._writer.finish(
            [(self.pid, self.process_name, self.parent, self.fork_ns, join_ns)]
        )

    def __enter__(self) -> "ProfilerSession":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if not self._closed:
            self.close()


class _OperationScope:
    __slots__ = ("_session", "_name", "_start")

    def __init__(self, session: ProfilerSession, name: str):
        self._session = session
        self._name = name

    def __enter__(self):
        session = self._session
        session._thread_state.op_stack.append(self._name)
        self._start = session.now_ns()
        return self

    def __exit__(self, exc_type, exc, tb):
        session = self._session
        end = session.now_ns()
        stack = session._thread_state.op_stack
        if not stack or stack[-1] != self._name:
            raise RuntimeError(f"operation stack corrupted: expected {self._name!r}")
        stack.pop()
        tid = session._tid()
        session._note_thread_activity(tid, self._start, end)
        session._emit(EventRecord(session.pid, tid, OPERATION, self._name, self._start, end - self._start))
        session.counters.operations += 1
        return False  # exceptions propagate; the event is already closed


class LibraryProxy:
    """Wraps a module-like object; callables record events when invoked."""

    def __init__(self, session: ProfilerSession, target, level_code: int):
        object.__setattr__(self, "_session", session)
        object.__setattr__(self, "_target", target)
        object.__setattr__(self, "_level", level_code)

    def __getattr__(self, name):
        attr = getattr(self._target, name)
        if not callable(attr):
            return attr
        session: ProfilerSession = self._session
        level = self._level
        level_name = _LEVEL_NAMES[level]

        def wrapped(*args, **kwargs):
            state = session._thread_state
            depth = state.wrap_depth.get(level, 0)
            state.wrap_depth[level] = depth + 1
            start = session.now_ns()
            try:
                return attr(*args, **kwargs)
            finally:
                end = session.now_ns()
                state.wrap_depth[level] = depth
                tid = session._tid()
                session._note_thread_activity(tid, start, end)
                session._emit(EventRecord(session.pid, tid, level, name, start, end - start))
                counters = session.counters
                counters.calls[level_name] = counters.calls.get(level_name, 0) + 1
                if depth == 0:
                    counters.transitions[level_name] = counters.transitions.get(level_name, 0) + 1

        wrapped.__name__ = getattr(attr, "__name__", name)
        wrapped.__qualname__ = getattr(attr, "__qualname__", name)
        wrapped.__doc__ = getattr(attr, "__doc__", None)
        return wrapped

    def __setattr__(self, name, value):
        setattr(self._target, name, value)

    def __dir__(self):
        return dir(self._target)
