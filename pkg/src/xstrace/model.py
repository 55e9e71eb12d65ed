"""Event and trace data model shared by every analysis stage.

Timestamps are integer nanoseconds on a per-clock-domain monotonic clock.
Intervals are half-open [start, start + duration): touching intervals do
not overlap, and zero-duration events contribute nothing to aggregates.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Optional

MAX_TIMESTAMP_NS = 2**63 - 1  # int64-safe bound for the compiled sweep kernel


class Category(IntEnum):
    """Stack level of an event.

    OPERATION events are developer annotations, never resources. The other
    five are resource categories; GPU is the only device-side one.
    """

    OPERATION = 0
    HIGH_LEVEL = 1
    BACKEND = 2
    SIMULATOR = 3
    ACCEL_API = 4
    GPU = 5


RESOURCE_CATEGORIES = frozenset(
    {Category.HIGH_LEVEL, Category.BACKEND, Category.SIMULATOR, Category.ACCEL_API, Category.GPU}
)
CPU_CATEGORIES = frozenset(
    {Category.HIGH_LEVEL, Category.BACKEND, Category.SIMULATOR, Category.ACCEL_API}
)


@dataclass(frozen=True, slots=True)
class Event:
    """One timestamped interval on a process/thread.

    ``tid`` doubles as the GPU stream id for device events; pid scoping keeps
    them distinct. ``correlation`` links a GPU event to the ACCEL_API event
    that launched it (the ACCEL_API event carries the matching id).
    """

    pid: int
    tid: int
    category: Category
    name: str
    start: int
    duration: int
    correlation: Optional[int] = None

    @property
    def end(self) -> int:
        return self.start + self.duration

    def sort_key(self):
        corr = self.correlation if self.correlation is not None else -1
        return (self.start, self.end, int(self.category), self.pid, self.tid, self.name, corr)


@dataclass(frozen=True, slots=True)
class ProcessMeta:
    """Identity and fork/join lineage of one process."""

    pid: int
    name: str
    parent: Optional[int] = None
    fork_ns: Optional[int] = None
    join_ns: Optional[int] = None


@dataclass(frozen=True)
class Trace:
    """Ordered event collection plus process metadata, one clock domain."""

    clock_domain: int
    events: tuple[Event, ...]
    processes: tuple[ProcessMeta, ...]

    def __init__(self, clock_domain: int, events: Iterable[Event], processes: Iterable[ProcessMeta]):
        object.__setattr__(self, "clock_domain", clock_domain)
        object.__setattr__(self, "events", tuple(events))
        object.__setattr__(self, "processes", tuple(processes))

    def sorted_events(self) -> tuple[Event, ...]:
        return tuple(sorted(self.events, key=Event.sort_key))

    def pids(self) -> tuple[int, ...]:
        return tuple(sorted({e.pid for e in self.events} | {p.pid for p in self.processes}))

    def events_for_pid(self, pid: int) -> tuple[Event, ...]:
        return tuple(e for e in self.events if e.pid == pid)

    def meta_for_pid(self, pid: int) -> Optional[ProcessMeta]:
        for meta in self.processes:
            if meta.pid == pid:
                return meta
        return None


@dataclass(frozen=True, slots=True)
class Violation:
    """One broken model invariant; validation reports these as data."""

    rule: str
    message: str
    event_indices: tuple[int, ...] = ()


class InvalidTraceError(ValueError):
    """Raised by consumers that require a clean trace."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        lines = "; ".join(f"{v.rule}: {v.message}" for v in violations[:5])
        more = "" if len(violations) <= 5 else f" (+{len(violations) - 5} more)"
        super().__init__(f"trace failed validation: {lines}{more}")


def pid_spans(trace: Trace) -> dict[int, tuple[int, int]]:
    """Per-pid (earliest start, latest end) over all events, including annotations."""
    spans: dict[int, tuple[int, int]] = {}
    for event in trace.events:
        cur = spans.get(event.pid)
        if cur is None:
            spans[event.pid] = (event.start, event.end)
        else:
            spans[event.pid] = (min(cur[0], event.start), max(cur[1], event.end))
    return spans


def _check_operation_nesting(events: list[tuple[int, Event]], out: list[Violation]) -> None:
    # events: (index, event) for one (pid, tid), OPERATION category only.
    # Sorted so an enclosing interval comes before anything it contains.
    ordered = sorted(events, key=lambda ie: (ie[1].start, -ie[1].end, ie[0]))
    stack: list[tuple[int, Event]] = []
    for idx, ev in ordered:
        while stack and stack[-1][1].end <= ev.start:
            stack.pop()
        if stack and ev.end > stack[-1][1].end:
            top_idx, top = stack[-1]
            out.append(
                Violation(
                    "improper-nesting",
                    f"OPERATION '{ev.name}' [{ev.start},{ev.end}) partially overlaps "
                    f"'{top.name}' [{top.start},{top.end}) on pid={ev.pid} tid={ev.tid}",
                    (top_idx, idx),
                )
            )
            continue
        stack.append((idx, ev))


def validate_trace(trace: Trace) -> list[Violation]:
    """Check every model invariant; returns an empty list iff the trace is clean.

    Pure and idempotent: never mutates the trace, and two calls return
    identical violation lists.
    """
    violations: list[Violation] = []

    meta_pids: set[int] = set()
    for meta in trace.processes:
        if meta.pid in meta_pids:
            violations.append(Violation("duplicate-process", f"pid {meta.pid} declared twice"))
        meta_pids.add(meta.pid)
        if meta.fork_ns is not None and meta.join_ns is not None and meta.fork_ns > meta.join_ns:
            violations.append(
                Violation("fork-join-order", f"pid {meta.pid} fork {meta.fork_ns} > join {meta.join_ns}")
            )

    # Parent links must form a forest (each node has one parent; no cycles).
    parents = {m.pid: m.parent for m in trace.processes}
    for pid in sorted(parents):
        seen = {pid}
        cur = parents.get(pid)
        while cur is not None and cur in parents:
            if cur in seen:
                violations.append(Violation("parent-cycle", f"process ancestry of pid {pid} contains a cycle"))
                break
            seen.add(cur)
            cur = parents.get(cur)

    api_correlations: dict[int, set[int]] = {}
    for event in trace.events:
        if event.category == Category.ACCEL_API and event.correlation is not None:
            api_correlations.setdefault(event.pid, set()).add(event.correlation)

    op_events: dict[tuple[int, int], list[tuple[int, Event]]] = {}
    for idx, event in enumerate(trace.events):
        if event.duration < 0:
            violations.append(
                Violation("negative-duration", f"event #{idx} '{event.name}' duration {event.duration}", (idx,))
            )
        if event.start < 0:
            violations.append(
                Violation("negative-start", f"event #{idx} '{event.name}' start {event.start}", (idx,))
            )
        if event.start + max(event.duration, 0) > MAX_TIMESTAMP_NS:
            violations.append(
                Violation("timestamp-range", f"event #{idx} '{event.name}' exceeds int64 ns range", (idx,))
            )
        if event.pid not in meta_pids:
            violations.append(
                Violation("unknown-pid", f"event #{idx} '{event.name}' pid {event.pid} has no ProcessMeta", (idx,))
            )
        if event.category == Category.OPERATION:
            op_events.setdefault((event.pid, event.tid), []).append((idx, event))
        elif event.category == Category.GPU and event.correlation is not None:
            if event.correlation not in api_correlations.get(event.pid, ()):
                violations.append(
                    Violation(
                        "dangling-correlation",
                        f"GPU event #{idx} '{event.name}' correlation {event.correlation} "
                        f"names no ACCEL_API event in pid {event.pid}",
                        (idx,),
                    )
                )

    for key in sorted(op_events):
        _check_operation_nesting(op_events[key], violations)

    return violations


def require_valid(trace: Trace) -> None:
    violations = validate_trace(trace)
    if violations:
        raise InvalidTraceError(violations)


def traces_equal(a: Trace, b: Trace) -> bool:
    """Structural equality up to stable event ordering."""
    return (
        a.clock_domain == b.clock_domain
        and a.sorted_events() == b.sorted_events()
        and tuple(sorted(a.processes, key=lambda m: m.pid)) == tuple(sorted(b.processes, key=lambda m: m.pid))
    )
