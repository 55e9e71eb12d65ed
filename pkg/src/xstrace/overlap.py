"""Sweep-line overlap accounting and language-transition counting.

The timeline of each pid is partitioned at every event boundary into
elementary intervals. Each interval with a non-empty active resource set S
adds its length to the cell (pid, innermost active operation path, S);
concurrent events of one category count once (set, not multiset semantics).
Intervals where nothing is active accumulate per-pid untracked time.

The inner boundary walk is the hot loop and lives in a compiled extension
(``_sweep``); a pure-Python twin (``_sweep_py``) is selected at import when
the extension is unavailable.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from enum import Enum

from .model import (
    Category,
    Event,
    InvalidTraceError,
    Trace,
    pid_spans,
    require_valid,
)
from . import _sweep_py

try:
    from . import _sweep as _sweep_native  # compiled extension, optional

    HAVE_NATIVE_SWEEP = True
except ImportError:  # pragma: no cover - depends on build environment
    _sweep_native = None
    HAVE_NATIVE_SWEEP = False

_DEFAULT_KERNEL = _sweep_native if HAVE_NATIVE_SWEEP else _sweep_py


class Attribution(Enum):
    """How a GPU event picks its operation path."""

    INSTANT = "instant"  # whatever operations are active while it runs
    CORRELATION = "correlation"  # operations active when its ACCEL_API launch started


@dataclass(frozen=True)
class OverlapKey:
    pid: int
    path: tuple[str, ...]  # operation names, outermost to innermost; empty = unscoped
    categories: frozenset

    def category_label(self) -> str:
        return "+".join(c.name for c in sorted(self.categories))

    def path_label(self) -> str:
        return "/".join(self.path) if self.path else "-"


@dataclass
class Breakdown:
    """Accumulated ns per (pid, operation path, category set)."""

    cells: dict[OverlapKey, int] = field(default_factory=dict)
    spans: dict[int, tuple[int, int]] = field(default_factory=dict)
    untracked: dict[int, int] = field(default_factory=dict)

    def span_ns(self, pid: int) -> int:
        lo, hi = self.spans[pid]
        return hi - lo

    def pid_cells(self, pid: int) -> dict[OverlapKey, int]:
        return {k: v for k, v in self.cells.items() if k.pid == pid}

    def total_attributed(self, pid: int) -> int:
        return sum(v for k, v in self.cells.items() if k.pid == pid)


class PathTable:
    """Interns operation-name-id tuples as dense path ids."""

    def __init__(self):
        self._ids: dict[tuple, int] = {}
        self.paths: list[tuple] = []

    def get_id(self, key: tuple) -> int:
        idx = self._ids.get(key)
        if idx is None:
            idx = len(self.paths)
            self._ids[key] = idx
            self.paths.append(key)
        return idx


def _op_rank_order(events: list[Event], indices: list[int]) -> list[int]:
    # Nesting order: an operation that starts earlier, or starts together and
    # ends later, is outer. tid and name break remaining ties deterministically.
    return sorted(indices, key=lambda i: (events[i].start, -events[i].end, events[i].tid, events[i].name))


def _ops_active_at(op_indices_ranked: list[int], events: list[Event], instant: int) -> list[int]:
    return [i for i in op_indices_ranked if events[i].start <= instant < events[i].end]


def compute_overlap(trace: Trace, attribution: Attribution = Attribution.INSTANT,
                    kernel=None) -> Breakdown:
    """Attribute every nanosecond of each pid's timeline to overlap cells.

    Rejects invalid traces with InvalidTraceError carrying the violations.
    """
    require_valid(trace)
    kernel = kernel or _DEFAULT_KERNEL

    path_table = PathTable()
    name_ids: dict[str, int] = {}
    id_names: list[str] = []

    breakdown = Breakdown()
    spans = pid_spans(trace)

    by_pid: dict[int, list[Event]] = {}
    for event in trace.events:
        by_pid.setdefault(event.pid, []).append(event)

    for pid in sorted(by_pid):
        events = by_pid[pid]
        n = len(events)

        op_indices = [i for i in range(n) if events[i].category == Category.OPERATION]
        ranked = _op_rank_order(events, op_indices)
        ranks = [0] * n
        rank_name_ids: list[int] = []
        for rank, i in enumerate(ranked):
            ranks[i] = rank
            name = events[i].name
            nid = name_ids.get(name)
            if nid is None:
                nid = len(id_names)
                name_ids[name] = nid
                id_names.append(name)
            rank_name_ids.append(nid)

        fixed_paths = [-1] * n
        if attribution is Attribution.CORRELATION:
            # Duplicate correlation ids are legal; the launching event is the
            # earliest matching ACCEL_API event in stable order.
            api_by_corr: dict[int, Event] = {}
            for event in sorted(events, key=Event.sort_key):
                if event.category == Category.ACCEL_API and event.correlation is not None:
                    api_by_corr.setdefault(event.correlation, event)
            for i in range(n):
                event = events[i]
                if event.category != Category.GPU or event.correlation is None:
                    continue
                launch = api_by_corr[event.correlation]
                active = _ops_active_at(ranked, events, launch.start)
                names = []
                for j in active:
                    nid = name_ids[events[j].name]
                    if not names or names[-1] != nid:
                        names.append(nid)
                fixed_paths[i] = path_table.get_id(tuple(names))

        starts = [e.start for e in events]
        ends = [e.end for e in events]
        cats = [int(e.category) for e in events]
        nonzero = [i for i in range(n) if events[i].duration > 0]
        add_order = sorted(nonzero, key=lambda i: starts[i])
        rem_order = sorted(nonzero, key=lambda i: ends[i])

        cells, tracked = kernel.sweep_pid(
            starts, ends, cats, ranks, fixed_paths, add_order, rem_order,
            rank_name_ids, path_table,
        )

        for key, ns in cells.items():
            path_id = key >> 6
            mask = key & 63
            categories = frozenset(Category(c) for c in range(1, 6) if mask & (1 << (c - 1)))
            path = tuple(id_names[nid] for nid in path_table.paths[path_id])
            breakdown.cells[OverlapKey(pid, path, categories)] = ns

        lo, hi = spans[pid]
        breakdown.spans[pid] = (lo, hi)
        breakdown.untracked[pid] = (hi - lo) - tracked

    return breakdown


TRANSITION_PAIRS = (
    (Category.HIGH_LEVEL, Category.BACKEND),
    (Category.HIGH_LEVEL, Category.SIMULATOR),
    (Category.BACKEND, Category.ACCEL_API),
    (Category.SIMULATOR, Category.ACCEL_API),
)

# Pairs whose book-keeping is a language-wrapper hook; the *→ACCEL_API pairs
# are intercepted per ACCEL_API event instead.
WRAPPER_PAIRS = (
    (Category.HIGH_LEVEL, Category.BACKEND),
    (Category.HIGH_LEVEL, Category.SIMULATOR),
)


@dataclass(frozen=True)
class TransitionCounts:
    counts: tuple  # ((from, to, count), ...) sorted, for hashability

    def get(self, src: Category, dst: Category) -> int:
        for f, t, c in self.counts:
            if f == src and t == dst:
                return c
        return 0

    def as_dict(self) -> dict[tuple[Category, Category], int]:
        return {(f, t): c for f, t, c in self.counts}


def _maximal_events(events: list[Event]) -> list[Event]:
    """Events not properly contained in another event of the same list.

    Input events share one (pid, tid, category). Equal intervals both count.
    """
    ordered = sorted(events, key=lambda e: (e.start, -e.end))
    maximal: list[Event] = []
    max_end_before = None  # over strictly earlier starts
    group_start = None
    group_max_end = None
    for event in ordered:
        if event.start != group_start:
            if group_max_end is not None:
                max_end_before = group_max_end if max_end_before is None else max(max_end_before, group_max_end)
            group_start = event.start
            group_max_end = event.end
            contained = max_end_before is not None and max_end_before >= event.end
        else:
            contained = (group_max_end > event.end) or (
                max_end_before is not None and max_end_before >= event.end
            )
        if not contained:
            maximal.append(event)
    return maximal


def _union_intervals(events: list[Event]) -> list[tuple[int, int]]:
    merged: list[tuple[int, int]] = []
    for event in sorted(events, key=lambda e: (e.start, e.end)):
        if event.duration <= 0:
            continue
        if merged and event.start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], event.end))
        else:
            merged.append((event.start, event.end))
    return merged


def _covered(union: list[tuple[int, int]], instant: int) -> bool:
    idx = bisect_right(union, (instant, float("inf"))) - 1
    return idx >= 0 and union[idx][0] <= instant < union[idx][1]


def transition_sites(trace: Trace) -> dict[tuple[Category, Category], list[Event]]:
    """Counted transitions per pair: maximal inner events whose start lies
    inside an active outer-category event on the same tid."""
    require_valid(trace)
    by_key: dict[tuple[int, int, Category], list[Event]] = {}
    for event in trace.events:
        if event.category in (Category.HIGH_LEVEL, Category.BACKEND, Category.SIMULATOR, Category.ACCEL_API):
            by_key.setdefault((event.pid, event.tid, event.category), []).append(event)

    sites: dict[tuple[Category, Category], list[Event]] = {pair: [] for pair in TRANSITION_PAIRS}
    tids = sorted({(e.pid, e.tid) for e in trace.events})
    for pid, tid in tids:
        unions = {
            cat: _union_intervals(by_key.get((pid, tid, cat), []))
            for cat in (Category.HIGH_LEVEL, Category.BACKEND, Category.SIMULATOR)
        }
        for src, dst in TRANSITION_PAIRS:
            union = unions[src]
            if not union:
                continue
            inner = by_key.get((pid, tid, dst), [])
            for event in _maximal_events(inner):
                if _covered(union, event.start):
                    sites[(src, dst)].append(event)
    for pair in sites:
        sites[pair].sort(key=Event.sort_key)
    return sites


def count_transitions(trace: Trace) -> TransitionCounts:
    """Count language transitions once per counted inner event."""
    sites = transition_sites(trace)
    return TransitionCounts(tuple((src, dst, len(sites[(src, dst)])) for src, dst in TRANSITION_PAIRS))
