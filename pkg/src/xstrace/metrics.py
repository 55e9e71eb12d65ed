"""Derived metrics: sampled utilization, busy fractions, report rows.

Sampled utilization mimics a fixed-cadence device monitor: the span tiles
into consecutive periods anchored at the trace's earliest timestamp, a
period counts as utilized when it intersects at least one GPU event, and
the final partial period still counts toward the denominator. A single
short kernel per period is enough to report full utilization, which is
exactly how such monitors mislead; busy_fraction reports the honest union
time instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .model import Category, Trace, pid_spans, require_valid
from .overlap import Breakdown, OverlapKey


@dataclass(frozen=True)
class UtilizationSample:
    """One sampler period; lengths tile the span without overlap."""

    period_start: int
    period_ns: int
    utilized: bool


def _trace_span(trace: Trace) -> tuple[int, int]:
    spans = pid_spans(trace)
    if not spans:
        raise ValueError("no span: trace has no events")
    lo = min(s[0] for s in spans.values())
    hi = max(s[1] for s in spans.values())
    if hi <= lo:
        raise ValueError("no span: trace covers zero nanoseconds")
    return lo, hi


def _union_ns(trace: Trace, category: Category) -> int:
    intervals = sorted(
        (e.start, e.end) for e in trace.events if e.category == category and e.duration > 0
    )
    total = 0
    cur_lo: Optional[int] = None
    cur_hi = 0
    for lo, hi in intervals:
        if cur_lo is None:
            cur_lo, cur_hi = lo, hi
        elif lo <= cur_hi:
            cur_hi = max(cur_hi, hi)
        else:
            total += cur_hi - cur_lo
            cur_lo, cur_hi = lo, hi
    if cur_lo is not None:
        total += cur_hi - cur_lo
    return total


def utilization_samples(trace: Trace, period_ns: int) -> list[UtilizationSample]:
    if period_ns <= 0:
        raise ValueError(f"period_ns must be > 0, got {period_ns}")
    require_valid(trace)
    lo, hi = _trace_span(trace)
    gpu = sorted((e.start, e.end) for e in trace.events if e.category == Category.GPU and e.duration > 0)
    samples: list[UtilizationSample] = []
    idx = 0
    start = lo
    while start < hi:
        end = min(start + period_ns, hi)
        # Advance past events ending at or before this period.
        while idx < len(gpu) and gpu[idx][1] <= start:
            idx += 1
        utilized = idx < len(gpu) and gpu[idx][0] < start + period_ns
        samples.append(UtilizationSample(start, end - start, utilized))
        start += period_ns
    return samples


def sampled_utilization(trace: Trace, period_ns: int) -> float:
    """Utilized periods / total periods; the coarse-monitor estimate."""
    samples = utilization_samples(trace, period_ns)
    return sum(1 for s in samples if s.utilized) / len(samples)


def busy_fraction(trace: Trace, category: Category) -> float:
    """Union time of one category's intervals divided by the trace span."""
    require_valid(trace)
    lo, hi = _trace_span(trace)
    return _union_ns(trace, category) / (hi - lo)


@dataclass(frozen=True)
class ReportRow:
    pid: int
    path: tuple[str, ...]
    categories: Optional[frozenset]  # None marks the untracked residual
    ns: int
    percent: float

    def labels(self) -> tuple[str, str]:
        if self.categories is None:
            return ("-", "untracked")
        key = OverlapKey(self.pid, self.path, self.categories)
        return (key.path_label(), key.category_label())


def summarize(breakdown: Breakdown) -> list[ReportRow]:
    """Report-ready rows: ns and percent of pid span, largest first,
    with the per-pid residual labeled untracked."""
    rows: list[ReportRow] = []
    for pid in sorted(breakdown.spans):
        span = breakdown.span_ns(pid)
        cells = sorted(
            breakdown.pid_cells(pid).items(),
            key=lambda kv: (-kv[1], kv[0].path, kv[0].category_label()),
        )
        for key, ns in cells:
            pct = (100.0 * ns / span) if span else 0.0
            rows.append(ReportRow(pid, key.path, key.categories, ns, pct))
        untracked = breakdown.untracked.get(pid, 0)
        if untracked:
            pct = (100.0 * untracked / span) if span else 0.0
            rows.append(ReportRow(pid, (), None, untracked, pct))
    return rows
