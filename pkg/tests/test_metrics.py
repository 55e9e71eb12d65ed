import random

import pytest
from hypothesis import given, settings, strategies as st

from xstrace.metrics import (
    busy_fraction,
    sampled_utilization,
    summarize,
    utilization_samples,
)
from xstrace.model import Category, Event, ProcessMeta, Trace
from xstrace.overlap import compute_overlap
from xstrace.synth import (
    expand_leaf_trace,
    generate_workload,
    preset_exact,
    random_trace,
    sparse_kernel_trace,
)

G = Category.GPU
SIXTH_SECOND_NS = 166_666_667


def simple_trace(events):
    return Trace(1, events, [ProcessMeta(1, "p")])


def pad_span_to_multiple(trace: Trace, period_ns: int) -> Trace:
    """Append trailing glue so span % period == 0 (scoped dominance theorem)."""
    lo = min(e.start for e in trace.events)
    hi = max(e.end for e in trace.events)
    span = hi - lo
    target = -(-span // period_ns) * period_ns
    if target == span:
        return trace
    pid = trace.events[0].pid
    extra = Event(pid, 0, Category.HIGH_LEVEL, "pad", hi, target - span)
    return Trace(trace.clock_domain, list(trace.events) + [extra], trace.processes)


def test_no_gpu_events_zero_utilization():
    trace = simple_trace([Event(1, 0, Category.BACKEND, "x", 0, 1000)])
    assert sampled_utilization(trace, 100) == 0.0


def test_gpu_busy_entire_span_full_utilization():
    trace = simple_trace([Event(1, 9, G, "kernel", 0, 1000)])
    assert sampled_utilization(trace, 100) == 1.0
    assert busy_fraction(trace, G) == 1.0


def test_sparse_kernels_inflate_sampled_utilization():
    # One 1 us kernel per 100 ms over 10 s: every sixth-of-a-second period
    # holds a kernel, so the sampler reports saturation while true busy time
    # is one part in 100k.
    trace = sparse_kernel_trace()
    assert sampled_utilization(trace, SIXTH_SECOND_NS) == 1.0
    assert busy_fraction(trace, G) == pytest.approx(1e-5)
    samples = utilization_samples(trace, SIXTH_SECOND_NS)
    assert len(samples) == 60
    assert all(s.utilized for s in samples)


def test_empty_trace_is_argument_error():
    trace = Trace(1, [], [])
    with pytest.raises(ValueError):
        sampled_utilization(trace, 100)
    with pytest.raises(ValueError):
        busy_fraction(trace, G)


def test_period_must_be_positive(two_event_trace):
    with pytest.raises(ValueError):
        sampled_utilization(two_event_trace, 0)


def test_periods_tile_span_without_overlap():
    trace = simple_trace([Event(1, 0, Category.BACKEND, "x", 5, 1003)])
    samples = utilization_samples(trace, 100)
    assert sum(s.period_ns for s in samples) == 1003
    assert samples[0].period_start == 5
    assert samples[-1].period_ns == 3  # clipped tail, still one period


def test_busy_fraction_half_span():
    trace = simple_trace([
        Event(1, 0, Category.BACKEND, "x", 0, 100),
        Event(1, 9, G, "kernel", 0, 50),
    ])
    assert busy_fraction(trace, G) == pytest.approx(0.5)


def test_busy_fraction_overlapping_events_count_once():
    trace = simple_trace([
        Event(1, 0, Category.HIGH_LEVEL, "s", 0, 100),
        Event(1, 9, G, "a", 10, 30),
        Event(1, 10, G, "b", 20, 30),
    ])
    assert busy_fraction(trace, G) == pytest.approx(0.4)  # union [10, 50)


def test_busy_fraction_matches_generator_truth():
    _, _, truth = generate_workload(preset_exact(seed=13, iterations=3))
    uninstrumented, _, _ = generate_workload(preset_exact(seed=13, iterations=3))
    span = truth.total_uninstrumented_ns()
    expected = sum(truth.gpu_busy_ns.values()) / span
    assert busy_fraction(uninstrumented, G) == pytest.approx(expected)


@given(seed=st.integers(0, 100_000), k=st.integers(1, 40))
@settings(max_examples=60, deadline=None)
def test_dominance_on_period_aligned_spans(seed, k):
    trace = random_trace(random.Random(seed), max_events=80, max_span=20_000)
    span = max(e.end for e in trace.events) - min(e.start for e in trace.events)
    if span == 0:
        return
    period = -(-span // k)
    padded = pad_span_to_multiple(trace, period)
    assert sampled_utilization(padded, period) >= busy_fraction(padded, G) - 1e-12


@given(seed=st.integers(0, 100_000), k=st.integers(1, 20))
@settings(max_examples=40, deadline=None)
def test_every_busy_nanosecond_lies_in_a_utilized_period(seed, k):
    trace = random_trace(random.Random(seed), max_events=60, max_span=5_000)
    span = max(e.end for e in trace.events) - min(e.start for e in trace.events)
    if span == 0:
        return
    lo = min(e.start for e in trace.events)
    period = -(-span // k)
    samples = utilization_samples(trace, period)
    utilized = [s for s in samples if s.utilized]
    for event in trace.events:
        if event.category != G or event.duration == 0:
            continue
        for t in (event.start, event.end - 1):
            idx = (t - lo) // period
            assert samples[idx].utilized


@given(seed=st.integers(0, 100_000), base=st.integers(1, 400), mult=st.integers(2, 5))
@settings(max_examples=60, deadline=None)
def test_sampled_utilization_monotone_under_period_refinement(seed, base, mult):
    # Monotonicity holds when the coarser period is a multiple of the finer
    # one and the span is a multiple of the coarser period.
    trace = random_trace(random.Random(seed), max_events=60, max_span=10_000)
    coarse = base * mult
    padded = pad_span_to_multiple(trace, coarse)
    assert sampled_utilization(padded, coarse) >= sampled_utilization(padded, base) - 1e-12


@given(seed=st.integers(0, 100_000), cut=st.integers(1, 10**6))
@settings(max_examples=60, deadline=None)
def test_busy_fraction_invariant_under_event_split(seed, cut):
    trace = random_trace(random.Random(seed), max_events=60, max_span=20_000)
    gpu = [e for e in trace.events if e.category == G and e.duration >= 2]
    if not gpu:
        return
    victim = gpu[0]
    offset = 1 + cut % (victim.duration - 1) if victim.duration > 1 else 0
    if offset == 0:
        return
    pieces = [
        Event(victim.pid, victim.tid, victim.category, victim.name, victim.start, offset,
              victim.correlation),
        Event(victim.pid, victim.tid, victim.category, victim.name, victim.start + offset,
              victim.duration - offset, victim.correlation),
    ]
    events = [e for e in trace.events if e is not victim] + pieces
    split = Trace(trace.clock_domain, events, trace.processes)
    assert busy_fraction(split, G) == pytest.approx(busy_fraction(trace, G))


def test_summarize_single_cell_is_full_span():
    trace = simple_trace([Event(1, 0, Category.BACKEND, "x", 0, 100)])
    rows = summarize(compute_overlap(trace))
    assert len(rows) == 1
    assert rows[0].percent == pytest.approx(100.0)


def test_summarize_worked_example_percentages():
    rows = summarize(compute_overlap(expand_leaf_trace()))
    assert [r.ns for r in rows] == [1_700_000, 790_000]
    assert rows[0].percent == pytest.approx(100.0 * 1_700_000 / 2_490_000)
    assert rows[1].percent == pytest.approx(100.0 * 790_000 / 2_490_000)
    assert sum(r.percent for r in rows) == pytest.approx(100.0)


def test_summarize_includes_untracked_residual():
    trace = simple_trace([
        Event(1, 0, Category.BACKEND, "x", 0, 60),
        Event(1, 0, Category.OPERATION, "op", 0, 100),
    ])
    rows = summarize(compute_overlap(trace))
    untracked = [r for r in rows if r.categories is None]
    assert len(untracked) == 1
    assert untracked[0].ns == 40
    assert sum(r.percent for r in rows) == pytest.approx(100.0)


@given(seed=st.integers(0, 100_000))
@settings(max_examples=40, deadline=None)
def test_summarize_rows_reconcile_with_cells(seed):
    trace = random_trace(random.Random(seed), max_events=100, max_span=20_000, pids=2)
    breakdown = compute_overlap(trace)
    rows = summarize(breakdown)
    cell_sum = sum(r.ns for r in rows if r.categories is not None)
    assert cell_sum == sum(breakdown.cells.values())
    for pid in breakdown.spans:
        pid_rows = [r for r in rows if r.pid == pid]
        assert sum(r.ns for r in pid_rows) == breakdown.span_ns(pid)
