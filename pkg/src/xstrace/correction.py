"""Overhead correction: subtract calibrated book-keeping time in place.

Correction removes one slab per hook site from the owning pid's timeline
(see _timeline for the slab model):

  * each OPERATION event: annotation overhead split across its start and
    end edges (floor inside the head, remainder after the end timestamp);
  * each counted HIGH_LEVEL->BACKEND / HIGH_LEVEL->SIMULATOR transition:
    transition overhead at the inner event's start;
  * each ACCEL_API event: interception plus per-API internal overhead at
    the event's start.

The containing events shrink (floored at zero), everything after a slab
shifts earlier, and GPU events shift with their pid without shrinking.
A slab longer than its owning event is capped there and the shortfall
logged rather than borrowed from neighbouring events.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from . import _timeline
from .calibration import (
    HOOK_ANNOTATION,
    HOOK_API_INTERCEPTION,
    HOOK_API_INTERNAL,
    HOOK_KINDS,
    HOOK_TRANSITION,
    CalibrationProfile,
)
from .model import Category, Event, ProcessMeta, Trace, pid_spans, require_valid
from .overlap import WRAPPER_PAIRS, transition_sites


class UncalibratedHookError(ValueError):
    """The trace contains a hook kind the profile does not cover."""


@dataclass
class CorrectionReport:
    """Accounting for one correction pass.

    removed_ns counts removal that fell inside each pid's observed span
    (a slab anchored at the very end of the timeline removes no material).
    shortfall_ns counts overhead that could not be removed because the
    owning event was shorter than its slab.
    """

    removed_ns: dict[int, dict[str, int]] = field(default_factory=dict)
    shortfall_ns: dict[int, dict[str, int]] = field(default_factory=dict)
    original_total_ns: int = 0
    corrected_total_ns: int = 0
    bias: Optional[float] = None

    def removed_total(self, pid: Optional[int] = None) -> int:
        pids = [pid] if pid is not None else list(self.removed_ns)
        return sum(sum(self.removed_ns[p].values()) for p in pids)


def correction_bias(corrected_total: int, uninstrumented_total: int) -> float:
    """Signed deviation of the corrected total from uninstrumented reality."""
    if uninstrumented_total <= 0:
        raise ValueError(f"uninstrumented_total must be > 0, got {uninstrumented_total}")
    return (corrected_total - uninstrumented_total) / uninstrumented_total


def _profile_internal(profile: CalibrationProfile, name: str) -> Fraction:
    try:
        return profile.api_internal_ns[name]
    except KeyError:
        raise UncalibratedHookError(
            f"uncalibrated hook: API_INTERNAL({name!r}) missing from profile"
        ) from None


def collect_sites(trace: Trace, profile: CalibrationProfile) -> dict[int, list[_timeline.Site]]:
    """Hook sites per pid, in the canonical anchor order."""
    sites: dict[int, list[_timeline.Site]] = {}

    def add(pid: int, site: _timeline.Site) -> None:
        sites.setdefault(pid, []).append(site)

    for index, event in enumerate(trace.events):
        if event.category == Category.OPERATION:
            # Both halves draw on the operation's own budget: a slice larger
            # than the recorded operation caps there instead of consuming
            # neighbouring events.
            half = profile.annotation_ns / 2
            add(event.pid, _timeline.Site(event.start, _timeline.ANN_START, HOOK_ANNOTATION,
                                          half, index, event.tid, event.name))
            add(event.pid, _timeline.Site(event.end, _timeline.ANN_END, HOOK_ANNOTATION,
                                          profile.annotation_ns - half, index, event.tid, event.name))
        elif event.category == Category.ACCEL_API:
            add(event.pid, _timeline.Site(event.start, _timeline.API_INTERCEPT, HOOK_API_INTERCEPTION,
                                          profile.api_interception_ns, index, event.tid, event.name))
            add(event.pid, _timeline.Site(event.start, _timeline.API_INTERNAL_HOOK, HOOK_API_INTERNAL,
                                          _profile_internal(profile, event.name), index, event.tid, event.name))

    event_index = {id(e): i for i, e in enumerate(trace.events)}
    all_sites = transition_sites(trace)
    for pair in WRAPPER_PAIRS:
        for event in all_sites[pair]:
            add(event.pid, _timeline.Site(event.start, _timeline.TRANSITION_HOOK, HOOK_TRANSITION,
                                          profile.transition_ns, event_index[id(event)],
                                          event.tid, event.name))

    for pid in sites:
        sites[pid].sort(key=_timeline.Site.order_key)
    return sites


def correct_trace(trace: Trace, profile: CalibrationProfile) -> tuple[Trace, CorrectionReport]:
    """Remove calibrated overhead at every hook site; returns (trace, report).

    The output trace validates cleanly; event start order within each tid is
    preserved and no duration goes negative.
    """
    require_valid(trace)
    report = CorrectionReport()
    spans = pid_spans(trace)
    sites_by_pid = collect_sites(trace, profile)

    events_by_pid: dict[int, list[tuple[int, Event]]] = {}
    for index, event in enumerate(trace.events):
        events_by_pid.setdefault(event.pid, []).append((index, event))

    corrected: list[tuple[int, Event]] = []
    rmaps: dict[int, _timeline.RemovalMap] = {}
    for pid in sorted(events_by_pid):
        indexed = events_by_pid[pid]
        sites = sites_by_pid.get(pid, [])
        span_start, span_end = spans[pid]
        report.original_total_ns += span_end - span_start

        amounts = _timeline.quantize_amounts(sites)
        budgets: dict[int, int] = {}
        lengths: list[int] = []
        removed: dict[str, int] = {h: 0 for h in HOOK_KINDS}
        shortfall: dict[str, int] = dict(removed)
        for site, amount in zip(sites, amounts):
            if site.owner_index is not None:
                budget = budgets.get(site.owner_index)
                if budget is None:
                    budget = trace.events[site.owner_index].duration
                capped = min(amount, budget)
                budgets[site.owner_index] = budget - capped
                shortfall[site.hook] += amount - capped
                lengths.append(capped)
            else:
                lengths.append(amount)

        rmap = _timeline.RemovalMap([s.anchor for s in sites], lengths)
        for site, (a, b) in zip(sites, rmap.extents):
            removed[site.hook] += min(b, span_end) - min(a, span_end)

        report.removed_ns[pid] = removed
        report.shortfall_ns[pid] = shortfall
        rmaps[pid] = rmap
        mapped = _timeline.map_events([event for _, event in indexed], rmap)
        corrected.extend(zip((index for index, _ in indexed), mapped))

    corrected.sort(key=lambda pair: pair[0])
    processes = []
    for meta in trace.processes:
        rmap = rmaps.get(meta.pid)
        if rmap is None:
            processes.append(meta)
        else:
            # fork/join are timestamps on this process's timeline and shift
            # with its corrected material.
            processes.append(
                ProcessMeta(
                    meta.pid,
                    meta.name,
                    meta.parent,
                    rmap(meta.fork_ns) if meta.fork_ns is not None else None,
                    rmap(meta.join_ns) if meta.join_ns is not None else None,
                )
            )
    out = Trace(trace.clock_domain, [e for _, e in corrected], processes)
    for lo, hi in pid_spans(out).values():
        report.corrected_total_ns += hi - lo
    return out, report
