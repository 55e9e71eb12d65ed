#!/usr/bin/env python3
"""Compare the compiled sweep kernel against the pure-Python fallback.

Reports both the isolated kernel time (the boundary walk itself) and the
end-to-end compute_overlap time, which includes validation and the shared
preprocessing.

Usage: python benchmarks/bench_overlap.py [--events N] [--repeats R]
"""

import argparse
import time

from xstrace import _sweep_py
from xstrace.model import Category
from xstrace.overlap import HAVE_NATIVE_SWEEP, PathTable, compute_overlap
from xstrace.synth import generate_workload, preset_exact

if HAVE_NATIVE_SWEEP:
    from xstrace import _sweep as _sweep_native
else:
    _sweep_native = None


def build_trace(target_events: int):
    iterations = max(1, target_events // 37)
    _, instrumented, _ = generate_workload(preset_exact(seed=1234, iterations=iterations))
    return instrumented


def kernel_inputs(trace):
    events = [e for e in trace.events if e.pid == 1]
    n = len(events)
    op_indices = [i for i in range(n) if events[i].category == Category.OPERATION]
    ranked = sorted(op_indices, key=lambda i: (events[i].start, -events[i].end, events[i].tid, events[i].name))
    ranks = [0] * n
    rank_name_ids = []
    name_ids: dict = {}
    for rank, i in enumerate(ranked):
        ranks[i] = rank
        rank_name_ids.append(name_ids.setdefault(events[i].name, len(name_ids)))
    starts = [e.start for e in events]
    ends = [e.end for e in events]
    cats = [int(e.category) for e in events]
    nonzero = [i for i in range(n) if events[i].duration > 0]
    add_order = sorted(nonzero, key=lambda i: starts[i])
    rem_order = sorted(nonzero, key=lambda i: ends[i])
    return starts, ends, cats, ranks, [-1] * n, add_order, rem_order, rank_name_ids


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--events", type=int, default=200_000)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    trace = build_trace(args.events)
    n = len(trace.events)
    inputs = kernel_inputs(trace)
    print(f"trace: {n} events, span {max(e.end for e in trace.events) / 1e6:.1f} ms")
    print(f"{'measurement':<26} {'pure python':>12} {'compiled':>12} {'speedup':>9}")

    py_kernel = best_of(lambda: _sweep_py.sweep_pid(*inputs, PathTable()), args.repeats)
    py_full = best_of(lambda: compute_overlap(trace, kernel=_sweep_py), args.repeats)
    if _sweep_native is None:
        print(f"{'sweep kernel (s)':<26} {py_kernel:>12.4f} {'-':>12} {'-':>9}")
        print(f"{'compute_overlap (s)':<26} {py_full:>12.4f} {'-':>12} {'-':>9}")
        print("compiled kernel unavailable (pure-Python fallback active)")
        return

    cy_kernel = best_of(lambda: _sweep_native.sweep_pid(*inputs, PathTable()), args.repeats)
    cy_full = best_of(lambda: compute_overlap(trace, kernel=_sweep_native), args.repeats)
    print(f"{'sweep kernel (s)':<26} {py_kernel:>12.4f} {cy_kernel:>12.4f} {py_kernel / cy_kernel:>8.2f}x")
    print(f"{'compute_overlap (s)':<26} {py_full:>12.4f} {cy_full:>12.4f} {py_full / cy_full:>8.2f}x")


if __name__ == "__main__":
    main()
