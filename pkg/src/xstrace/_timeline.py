"""Timeline surgery shared by the workload generator and overhead correction.

Model: every hook's book-keeping executes immediately after its recording
timestamp, so a hook site at instant t owns the slab (t, t+s] of wall time.
Insertion (generator) and removal (correction) are exact inverses:

  insert(t, s):  x -> x        for x <= t,   x + s    for x > t
  remove(t, s):  y -> y        for y <= t,   t        for t < y <= t+s,
                 y - s         for y > t+s

Both maps are monotone, so they preserve event order and nesting and never
produce negative durations. GPU events only shift (start is mapped, duration
is preserved): device time is not inflated by CPU book-keeping.

Slab lengths may be fractional (calibrated means); quantize_amounts turns a
site sequence into integer-ns slabs through a running rational accumulator,
so constant integer overheads stay exact and fractional ones drift < 1 ns
total per pid. Generator and corrector must feed sites through the same
ordering for the closure to be exact.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .model import Category, Event

# Site subkinds, in their tie-break order at one anchor instant.
ANN_START = 0
TRANSITION_HOOK = 1
API_INTERCEPT = 2
API_INTERNAL_HOOK = 3
ANN_END = 4


@dataclass(frozen=True)
class Site:
    """One book-keeping occurrence on a pid timeline."""

    anchor: int  # recording timestamp the slab follows
    subkind: int
    hook: str  # accounting label ("annotation", "transition", ...)
    amount: Fraction  # requested slab length, ns
    owner_index: Optional[int] = None  # event owning the slab, for budget caps
    tid: int = 0
    name: str = ""

    def order_key(self):
        # Coordinate-free: identical between original and shifted timelines.
        return (self.anchor, self.subkind, self.tid, self.name)


def quantize_amounts(sites: Sequence[Site]) -> list[int]:
    """Integer slab per site via floor-accumulation of the exact amounts."""
    out = []
    cum = Fraction(0)
    prev = 0
    for site in sites:
        cum += site.amount
        flo = math.floor(cum)
        out.append(flo - prev)
        prev = flo
    return out


class InsertionMap:
    """x -> x + total slab length anchored strictly before x."""

    def __init__(self, anchors: Sequence[int], lengths: Sequence[int]):
        pairs = sorted((a, s) for a, s in zip(anchors, lengths) if s > 0)
        self.anchors = [a for a, _ in pairs]
        self.prefix = [0]
        for _, s in pairs:
            self.prefix.append(self.prefix[-1] + s)

    def __call__(self, x: int) -> int:
        return x + self.prefix[bisect_left(self.anchors, x)]


class RemovalMap:
    """Sequential composition of remove(t, s) slabs.

    Overlapping requests (possible with over-estimated calibration) compose
    by consuming material from max(anchor, previous slab end) onward, which
    keeps the map monotone. ``extents`` exposes the realized disjoint slabs
    (A_i, B_i] in input coordinates, aligned with the input order.
    """

    def __init__(self, anchors: Sequence[int], lengths: Sequence[int]):
        self.extents: list[tuple[int, int]] = []
        starts: list[int] = []
        ends: list[int] = []
        prefix = [0]
        prev_end = None
        for anchor, length in zip(anchors, lengths):
            a = anchor if prev_end is None or anchor > prev_end else prev_end
            b = a + length
            self.extents.append((a, b))
            if length > 0:
                starts.append(a)
                ends.append(b)
                prefix.append(prefix[-1] + length)
            prev_end = b if prev_end is None or b > prev_end else prev_end
        self._starts = starts
        self._ends = ends
        self._prefix = prefix

    def __call__(self, y: int) -> int:
        k = bisect_right(self._ends, y)
        removed = self._prefix[k]
        if k < len(self._starts) and self._starts[k] < y:
            removed += y - self._starts[k]
        return y - removed


def map_events(events: Sequence[Event], tmap) -> list[Event]:
    """Apply a timeline map; GPU events shift, everything else reshapes."""
    out = []
    for event in events:
        start = tmap(event.start)
        if event.category == Category.GPU:
            duration = event.duration
        else:
            duration = tmap(event.end) - start
        out.append(
            Event(event.pid, event.tid, event.category, event.name, start, duration, event.correlation)
        )
    return out
