"""Synthetic workloads with known ground truth, plus the brute-force oracle.

The generator emits the canonical training-loop shape (inference /
simulation / backpropagation operations around native calls, accelerator
API calls, and asynchronously overlapping GPU kernels) twice per run: an
uninstrumented trace, and an instrumented twin with book-keeping slabs
inserted at every hook site. The recorded GroundTruth carries the true
breakdown, hook-site counts, injected overheads, transitions, and GPU busy
time, which downstream tests use as their oracle.

brute_force_overlap is the independent check for the sweep engine: it
discretizes the timeline into resolution-sized cells and derives each
cell's key from per-cell coverage counts. At 1 ns resolution on integer
traces it is exact.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import _timeline
from .calibration import (
    LADDER_LEGS,
    LEG_ANNOTATIONS,
    LEG_INTERCEPTION,
    LEG_INTERNAL,
    LEG_OFF,
    LEG_TRANSITIONS,
    RunSummary,
)
from .model import Category, Event, ProcessMeta, Trace, pid_spans
from .overlap import Attribution, Breakdown, OverlapKey, compute_overlap

BRUTE_FORCE_CELL_GUARD = 10**8
_WINDOW_CELLS = 1 << 22

GPU_STREAM_TID = 1000
MAIN_TID = 0


# ---------------------------------------------------------------------------
# Duration / overhead distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dist:
    """Non-negative integer-ns distribution: constant, uniform, or lognormal."""

    kind: str
    value: int = 0  # constant
    low: int = 0  # uniform
    high: int = 0
    mean: float = 0.0  # lognormal
    cv: float = 0.0

    @classmethod
    def constant(cls, value: int) -> "Dist":
        return cls("constant", value=value)

    @classmethod
    def uniform(cls, low: int, high: int) -> "Dist":
        return cls("uniform", low=low, high=high)

    @classmethod
    def lognormal(cls, mean: float, cv: float) -> "Dist":
        return cls("lognormal", mean=mean, cv=cv)

    def draw(self, rng: random.Random) -> int:
        if self.kind == "constant":
            return self.value
        if self.kind == "uniform":
            return rng.randint(self.low, self.high)
        if self.kind == "lognormal":
            if self.mean <= 0:
                return 0
            sigma2 = math.log(1.0 + self.cv * self.cv)
            mu = math.log(self.mean) - sigma2 / 2.0
            return max(0, round(rng.lognormvariate(mu, math.sqrt(sigma2))))
        raise ValueError(f"unknown distribution kind {self.kind!r}")

    def mean_ns(self) -> float:
        if self.kind == "constant":
            return float(self.value)
        if self.kind == "uniform":
            return (self.low + self.high) / 2.0
        if self.kind == "lognormal":
            return self.mean
        raise ValueError(f"unknown distribution kind {self.kind!r}")

    def to_json(self) -> dict:
        if self.kind == "constant":
            return {"dist": "constant", "ns": self.value}
        if self.kind == "uniform":
            return {"dist": "uniform", "low": self.low, "high": self.high}
        return {"dist": "lognormal", "mean": self.mean, "cv": self.cv}

    @classmethod
    def from_json(cls, raw: dict) -> "Dist":
        kind = raw.get("dist")
        if kind == "constant":
            return cls.constant(int(raw["ns"]))
        if kind == "uniform":
            return cls.uniform(int(raw["low"]), int(raw["high"]))
        if kind == "lognormal":
            return cls.lognormal(float(raw["mean"]), float(raw["cv"]))
        raise ValueError(f"unknown distribution kind {kind!r}")


# ---------------------------------------------------------------------------
# Workload specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseSpec:
    """One operation instance per loop iteration."""

    op: str
    level: Category  # BACKEND or SIMULATOR
    calls: int
    apis_per_call: int = 0

    def to_json(self) -> dict:
        return {"op": self.op, "level": self.level.name, "calls": self.calls,
                "apis_per_call": self.apis_per_call}

    @classmethod
    def from_json(cls, raw: dict) -> "PhaseSpec":
        level = Category[raw["level"]]
        if level not in (Category.BACKEND, Category.SIMULATOR):
            raise ValueError(f"phase level must be BACKEND or SIMULATOR, got {level.name}")
        return cls(str(raw["op"]), level, int(raw["calls"]), int(raw.get("apis_per_call", 0)))


_DURATION_KEYS = ("glue", "backend", "simulator", "api", "api_gap", "kernel", "launch_delay")


@dataclass(frozen=True)
class WorkloadSpec:
    """Declarative loop structure; see docs/workload-config.md for the keys."""

    seed: int
    iterations: int
    phases: tuple[PhaseSpec, ...]
    durations: dict[str, Dist]
    overheads: dict[str, Dist]  # annotation, transition, api_interception
    api_internal: dict[str, Dist]  # per ACCEL_API name
    kernel_prob: float = 0.0
    processes: int = 1
    clock_domain: int = 1
    name: str = "workload"

    def __post_init__(self):
        if self.processes < 1 or self.iterations < 0:
            raise ValueError("processes must be >= 1 and iterations >= 0")
        missing = [k for k in _DURATION_KEYS if k not in self.durations]
        if missing:
            raise ValueError(f"durations missing keys: {missing}")
        for key in ("annotation", "transition", "api_interception"):
            if key not in self.overheads:
                raise ValueError(f"overheads missing key: {key}")
        if not 0.0 <= self.kernel_prob <= 1.0:
            raise ValueError("kernel_prob must be in [0, 1]")
        if self.kernel_prob > 0 and not self.api_internal:
            raise ValueError("api_internal must name at least one API when kernels are enabled")

    def to_json(self) -> str:
        return json.dumps(
            {
                "name": self.name,
                "seed": self.seed,
                "processes": self.processes,
                "clock_domain": self.clock_domain,
                "iterations": self.iterations,
                "kernel_prob": self.kernel_prob,
                "loop": [p.to_json() for p in self.phases],
                "durations": {k: d.to_json() for k, d in sorted(self.durations.items())},
                "overheads": {k: d.to_json() for k, d in sorted(self.overheads.items())},
                "api_internal": {k: d.to_json() for k, d in sorted(self.api_internal.items())},
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "WorkloadSpec":
        raw = json.loads(text)
        return cls(
            seed=int(raw.get("seed", 0)),
            iterations=int(raw["iterations"]),
            phases=tuple(PhaseSpec.from_json(p) for p in raw["loop"]),
            durations={k: Dist.from_json(v) for k, v in raw["durations"].items()},
            overheads={k: Dist.from_json(v) for k, v in raw["overheads"].items()},
            api_internal={k: Dist.from_json(v) for k, v in raw.get("api_internal", {}).items()},
            kernel_prob=float(raw.get("kernel_prob", 0.0)),
            processes=int(raw.get("processes", 1)),
            clock_domain=int(raw.get("clock_domain", 1)),
            name=str(raw.get("name", "workload")),
        )


@dataclass
class GroundTruth:
    """Generator-emitted oracle record for one run pair."""

    uninstrumented_breakdown: Breakdown
    site_counts: dict[str, int]
    injected_ns: dict[str, int]  # per hook kind; api_internal split per name below
    injected_api_internal_ns: dict[str, int]
    transitions: dict[tuple[Category, Category], int]
    gpu_busy_ns: dict[int, int]
    uninstrumented_span_ns: dict[int, int]
    instrumented_span_ns: dict[int, int]

    def total_uninstrumented_ns(self) -> int:
        return sum(self.uninstrumented_span_ns.values())

    def total_instrumented_ns(self) -> int:
        return sum(self.instrumented_span_ns.values())

    def total_injected_ns(self) -> int:
        return sum(self.injected_ns.values())


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

def _draw_at_least(dist: Dist, rng: random.Random, floor: int) -> int:
    return max(floor, dist.draw(rng))


@dataclass
class _PidBuild:
    events: list[Event] = field(default_factory=list)
    sites: list[tuple[int, int, str, str, int]] = field(default_factory=list)
    # (anchor, subkind, hook, name, tid); amounts drawn later per enabled set
    gpu_busy: int = 0


def _build_pid(spec: WorkloadSpec, pid: int, rng: random.Random) -> _PidBuild:
    """Uninstrumented timeline for one process, plus its hook-site skeleton."""
    build = _PidBuild()
    durations = spec.durations
    api_names = sorted(spec.api_internal) or ["api"]
    t = 0
    stream_cursor = 0
    corr = 0
    kernel_intervals: list[tuple[int, int]] = []

    for _ in range(spec.iterations):
        t += _draw_at_least(durations["glue"], rng, 1)
        for phase in spec.phases:
            op_start = t
            t += _draw_at_least(durations["glue"], rng, 1)
            for _ in range(phase.calls):
                call_start = t
                if phase.level == Category.BACKEND and phase.apis_per_call > 0:
                    t += _draw_at_least(durations["api_gap"], rng, 1)
                    for _ in range(phase.apis_per_call):
                        api_name = rng.choice(api_names)
                        api_start = t
                        api_dur = durations["api"].draw(rng)
                        t += api_dur
                        correlation = None
                        if rng.random() < spec.kernel_prob:
                            corr += 1
                            correlation = corr
                            delay = durations["launch_delay"].draw(rng)
                            k_start = max(api_start + delay, stream_cursor)
                            k_dur = durations["kernel"].draw(rng)
                            build.events.append(Event(pid, GPU_STREAM_TID, Category.GPU,
                                                      "kernel", k_start, k_dur, correlation))
                            kernel_intervals.append((k_start, k_start + k_dur))
                            stream_cursor = k_start + k_dur
                        build.events.append(Event(pid, MAIN_TID, Category.ACCEL_API,
                                                  api_name, api_start, api_dur, correlation))
                        build.sites.append((api_start, _timeline.API_INTERCEPT,
                                            "api_interception", api_name, MAIN_TID))
                        build.sites.append((api_start, _timeline.API_INTERNAL_HOOK,
                                            "api_internal", api_name, MAIN_TID))
                        t += _draw_at_least(durations["api_gap"], rng, 1)
                else:
                    key = "backend" if phase.level == Category.BACKEND else "simulator"
                    t += _draw_at_least(durations[key], rng, 1)
                call_name = f"{phase.op}_{'backend' if phase.level == Category.BACKEND else 'sim'}"
                build.events.append(Event(pid, MAIN_TID, phase.level, call_name,
                                          call_start, t - call_start))
                build.sites.append((call_start, _timeline.TRANSITION_HOOK,
                                    "transition", call_name, MAIN_TID))
                t += _draw_at_least(durations["glue"], rng, 1)
            build.events.append(Event(pid, MAIN_TID, Category.OPERATION, phase.op,
                                      op_start, t - op_start))
            build.sites.append((op_start, _timeline.ANN_START, "annotation", phase.op, MAIN_TID))
            build.sites.append((t, _timeline.ANN_END, "annotation", phase.op, MAIN_TID))

    # Ambient high-level event: the interpreter is on-stack for the whole
    # process, covering kernels so the span always ends on a CPU event.
    # A degenerate spec (no iterations) produces an empty trace instead.
    if build.events or t > 0:
        end = max(t, stream_cursor) + _draw_at_least(durations["glue"], rng, 1)
        build.events.append(Event(pid, MAIN_TID, Category.HIGH_LEVEL, "script", 0, end))

    merged: list[tuple[int, int]] = []
    for lo, hi in sorted(kernel_intervals):
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        elif hi > lo:
            merged.append((lo, hi))
    build.gpu_busy = sum(hi - lo for lo, hi in merged)
    return build


_HOOK_ENABLED_BY_LEG = {
    LEG_OFF: frozenset(),
    LEG_ANNOTATIONS: frozenset({"annotation"}),
    LEG_TRANSITIONS: frozenset({"annotation", "transition"}),
    LEG_INTERCEPTION: frozenset({"annotation", "transition", "api_interception"}),
    LEG_INTERNAL: frozenset({"annotation", "transition", "api_interception", "api_internal"}),
}


def _instrument_pid(
    spec: WorkloadSpec,
    build: _PidBuild,
    enabled: frozenset,
    rng: random.Random,
) -> tuple[list[Event], dict[str, int], dict[str, int]]:
    """Insert overhead slabs for the enabled hook kinds; returns
    (events, injected per kind, injected per API name)."""
    raw_sites = sorted(build.sites, key=lambda s: (s[0], s[1], s[4], s[3]))
    sites: list[_timeline.Site] = []
    for anchor, subkind, hook, name, tid in raw_sites:
        if hook not in enabled:
            amount = Fraction(0)
        elif subkind == _timeline.ANN_START:
            amount = Fraction(spec.overheads["annotation"].draw(rng))
        elif subkind == _timeline.ANN_END:
            amount = Fraction(0)  # rewritten below: the op's total splits across edges
        elif subkind == _timeline.TRANSITION_HOOK:
            amount = Fraction(spec.overheads["transition"].draw(rng))
        elif subkind == _timeline.API_INTERCEPT:
            amount = Fraction(spec.overheads["api_interception"].draw(rng))
        else:
            amount = Fraction(spec.api_internal[name].draw(rng))
        sites.append(_timeline.Site(anchor, subkind, hook, amount, None, tid, name))

    # Annotation totals split across the operation's start and end edges.
    # Pair sites per (tid, name) in nesting order: starts and ends of properly
    # nested operations match up LIFO per name.
    open_halves: dict[tuple[int, str], list[Fraction]] = {}
    for i, site in enumerate(sites):
        if site.subkind == _timeline.ANN_START:
            half = site.amount / 2
            open_halves.setdefault((site.tid, site.name), []).append(site.amount - half)
            sites[i] = replace(site, amount=half)
        elif site.subkind == _timeline.ANN_END and "annotation" in enabled:
            sites[i] = replace(site, amount=open_halves[(site.tid, site.name)].pop())

    amounts = _timeline.quantize_amounts(sites)
    imap = _timeline.InsertionMap([s.anchor for s in sites], amounts)
    events = _timeline.map_events(build.events, imap)

    injected: dict[str, int] = {h: 0 for h in ("annotation", "transition", "api_interception", "api_internal")}
    injected_api: dict[str, int] = {}
    for site, amount in zip(sites, amounts):
        injected[site.hook] += amount
        if site.subkind == _timeline.API_INTERNAL_HOOK:
            injected_api[site.name] = injected_api.get(site.name, 0) + amount
    return events, injected, injected_api


def _processes_meta(spec: WorkloadSpec, spans: dict[int, tuple[int, int]]) -> list[ProcessMeta]:
    metas = []
    for pid in sorted(spans):
        lo, hi = spans[pid]
        if pid == 1 or spec.processes == 1:
            metas.append(ProcessMeta(pid, f"{spec.name}_root" if spec.processes > 1 else spec.name))
        else:
            metas.append(ProcessMeta(pid, f"{spec.name}_worker_{pid - 2}", parent=1, fork_ns=lo, join_ns=hi))
    return metas


def _overhead_rng(spec: WorkloadSpec, pid: int, label: str) -> random.Random:
    return random.Random(f"{spec.seed}/{pid}/{label}")


def _base_builds(spec: WorkloadSpec) -> dict[int, _PidBuild]:
    return {
        pid: _build_pid(spec, pid, random.Random(f"{spec.seed}/{pid}/base"))
        for pid in range(1, spec.processes + 1)
    }


def _assemble(spec: WorkloadSpec, events_by_pid: dict[int, list[Event]]) -> Trace:
    events: list[Event] = []
    for pid in sorted(events_by_pid):
        events.extend(events_by_pid[pid])
    spans = {}
    for event in events:
        lo, hi = spans.get(event.pid, (event.start, event.end))
        spans[event.pid] = (min(lo, event.start), max(hi, event.end))
    return Trace(spec.clock_domain, events, _processes_meta(spec, spans))


def generate_workload(spec: WorkloadSpec) -> tuple[Trace, Trace, GroundTruth]:
    """Build the paired run: uninstrumented, fully instrumented, and truth.

    Deterministic for a fixed seed. A degenerate spec (zero iterations)
    yields empty-but-valid traces and zeroed truth.
    """
    builds = _base_builds(spec)
    uninstrumented = _assemble(spec, {pid: b.events for pid, b in builds.items()})

    instrumented_events: dict[int, list[Event]] = {}
    injected: dict[str, int] = {h: 0 for h in ("annotation", "transition", "api_interception", "api_internal")}
    injected_api: dict[str, int] = {}
    for pid, build in builds.items():
        events, inj, inj_api = _instrument_pid(
            spec, build, _HOOK_ENABLED_BY_LEG[LEG_INTERNAL], _overhead_rng(spec, pid, "full")
        )
        instrumented_events[pid] = events
        for hook, ns in inj.items():
            injected[hook] += ns
        for name, ns in inj_api.items():
            injected_api[name] = injected_api.get(name, 0) + ns
    instrumented = _assemble(spec, instrumented_events)

    n_ops = sum(1 for b in builds.values() for s in b.sites if s[1] == _timeline.ANN_START)
    n_trans = sum(1 for b in builds.values() for s in b.sites if s[1] == _timeline.TRANSITION_HOOK)
    n_apis = sum(1 for b in builds.values() for s in b.sites if s[1] == _timeline.API_INTERCEPT)
    backend_calls = sum(
        spec.iterations * p.calls for p in spec.phases if p.level == Category.BACKEND
    ) * spec.processes
    sim_calls = sum(
        spec.iterations * p.calls for p in spec.phases if p.level == Category.SIMULATOR
    ) * spec.processes

    truth = GroundTruth(
        uninstrumented_breakdown=compute_overlap(uninstrumented),
        site_counts={"annotation": n_ops, "transition": n_trans, "api_interception": n_apis},
        injected_ns=injected,
        injected_api_internal_ns=injected_api,
        transitions={
            (Category.HIGH_LEVEL, Category.BACKEND): backend_calls,
            (Category.HIGH_LEVEL, Category.SIMULATOR): sim_calls,
            (Category.BACKEND, Category.ACCEL_API): n_apis,
            (Category.SIMULATOR, Category.ACCEL_API): 0,
        },
        gpu_busy_ns={pid: b.gpu_busy for pid, b in builds.items()},
        uninstrumented_span_ns={pid: hi - lo for pid, (lo, hi) in pid_spans(uninstrumented).items()},
        instrumented_span_ns={pid: hi - lo for pid, (lo, hi) in pid_spans(instrumented).items()},
    )
    return uninstrumented, instrumented, truth


def generate_calibration_ladder(spec: WorkloadSpec) -> dict[str, RunSummary]:
    """Run the five-leg ladder on the spec's workload; returns leg summaries.

    Overhead draws are independent per leg (separate runs of one workload),
    while the underlying timeline is identical, mirroring deterministic
    replay of the training script.
    """
    builds = _base_builds(spec)
    summaries: dict[str, RunSummary] = {}
    for leg in LADDER_LEGS:
        total = 0
        api_samples: dict[str, list[int]] = {}
        for pid, build in builds.items():
            events, _, _ = _instrument_pid(
                spec, build, _HOOK_ENABLED_BY_LEG[leg], _overhead_rng(spec, pid, f"ladder/{leg}")
            )
            if events:
                total += max(e.end for e in events) - min(e.start for e in events)
            for event in events:
                if event.category == Category.ACCEL_API:
                    api_samples.setdefault(event.name, []).append(event.duration)
        n_ops = sum(1 for b in builds.values() for s in b.sites if s[1] == _timeline.ANN_START)
        n_trans = sum(1 for b in builds.values() for s in b.sites if s[1] == _timeline.TRANSITION_HOOK)
        n_apis = sum(1 for b in builds.values() for s in b.sites if s[1] == _timeline.API_INTERCEPT)
        summaries[leg] = RunSummary(
            leg=leg,
            total_ns=total,
            annotation_sites=n_ops,
            transition_sites=n_trans,
            api_sites=n_apis,
            api_samples={k: tuple(v) for k, v in sorted(api_samples.items())},
            run_id=f"{spec.name}-seed{spec.seed}-{leg}",
        )
    return summaries


# ---------------------------------------------------------------------------
# Randomized traces for property tests
# ---------------------------------------------------------------------------

_OP_NAMES = ("step", "rollout", "update", "evaluate")


def _gen_nested_ops(rng: random.Random, pid: int, tid: int, lo: int, hi: int,
                    depth: int, out: list[Event], budget: list[int]) -> None:
    if depth <= 0 or hi - lo < 2 or budget[0] <= 0:
        return
    cursor = lo
    for _ in range(rng.randint(0, 3)):
        if budget[0] <= 0 or hi - cursor < 2:
            break
        start = rng.randint(cursor, hi - 1)
        end = rng.randint(start, hi)
        out.append(Event(pid, tid, Category.OPERATION, rng.choice(_OP_NAMES), start, end - start))
        budget[0] -= 1
        _gen_nested_ops(rng, pid, tid, start, end, depth - 1, out, budget)
        cursor = end


def random_trace(
    rng: random.Random,
    max_events: int = 200,
    max_span: int = 1_000_000,
    max_depth: int = 3,
    max_categories: int = 4,
    pids: int = 1,
    clock_domain: int = 7,
) -> Trace:
    """A validator-clean randomized trace for oracle and property tests."""
    span = rng.randint(10, max_span)
    cats = list(rng.sample(sorted(RESOURCE_SAMPLE), k=min(max_categories, len(RESOURCE_SAMPLE))))
    events: list[Event] = []
    metas = []
    for pid in range(1, pids + 1):
        metas.append(ProcessMeta(pid, f"proc{pid}"))
        budget = [max(1, max_events // (3 * pids))]
        for tid in (0, 1):
            _gen_nested_ops(rng, pid, tid, 0, span, max_depth, events, budget)

        n_resource = rng.randint(1, max(1, max_events // pids - budget[0]))
        corr = 0
        api_ids: list[int] = []
        for _ in range(n_resource):
            cat = rng.choice(cats)
            start = rng.randint(0, span - 1)
            duration = rng.choice((0, rng.randint(0, max(1, span // 8)), rng.randint(0, max(1, span // 64))))
            correlation = None
            tid = rng.choice((0, 1))
            name = f"{cat.name.lower()}_{rng.randint(0, 3)}"
            if cat == Category.ACCEL_API and rng.random() < 0.5:
                if api_ids and rng.random() < 0.1:
                    correlation = rng.choice(api_ids)  # duplicate ids are legal
                else:
                    corr += 1
                    correlation = corr
                    api_ids.append(corr)
            if cat == Category.GPU:
                tid = GPU_STREAM_TID + rng.randint(0, 1)
                if api_ids and rng.random() < 0.7:
                    correlation = rng.choice(api_ids)
                name = "kernel"
            events.append(Event(pid, tid, cat, name, start, duration, correlation))
    return Trace(clock_domain, events, metas)


RESOURCE_SAMPLE = (
    Category.HIGH_LEVEL,
    Category.BACKEND,
    Category.SIMULATOR,
    Category.ACCEL_API,
    Category.GPU,
)


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------

def _ranked_op_indices(events: Sequence[Event]) -> list[int]:
    ops = [i for i, e in enumerate(events) if e.category == Category.OPERATION]
    return sorted(ops, key=lambda i: (events[i].start, -events[i].end, events[i].tid, events[i].name))


def _dedupe_path(names: Sequence[str]) -> tuple[str, ...]:
    out: list[str] = []
    for name in names:
        if not out or out[-1] != name:
            out.append(name)
    return tuple(out)


def _launch_path(events: Sequence[Event], ranked_ops: Sequence[int], instant: int) -> tuple[str, ...]:
    names = [events[i].name for i in ranked_ops if events[i].start <= instant < events[i].end]
    return _dedupe_path(names)


def brute_force_overlap(
    trace: Trace,
    resolution_ns: int = 1,
    attribution: Attribution = Attribution.INSTANT,
) -> Breakdown:
    """Discretized overlap accounting, independent of the sweep engine.

    Each cell of ``resolution_ns`` is keyed by direct per-cell coverage
    (diff-array counts per category and per operation); exact at 1 ns on
    integer traces. Guarded at span/resolution <= 1e8 cells.
    """
    from .model import require_valid

    require_valid(trace)
    if resolution_ns < 1:
        raise ValueError("resolution_ns must be >= 1")
    spans = pid_spans(trace)
    if spans:
        lo = min(s[0] for s in spans.values())
        hi = max(s[1] for s in spans.values())
        if (hi - lo + resolution_ns - 1) // resolution_ns > BRUTE_FORCE_CELL_GUARD:
            raise ValueError(
                f"span {hi - lo} ns at resolution {resolution_ns} exceeds {BRUTE_FORCE_CELL_GUARD} cells"
            )

    breakdown = Breakdown()
    by_pid: dict[int, list[Event]] = {}
    for event in trace.events:
        by_pid.setdefault(event.pid, []).append(event)

    for pid in sorted(by_pid):
        events = by_pid[pid]
        t0, t1 = spans[pid]
        n_cells = -(-(t1 - t0) // resolution_ns)
        ranked_ops = _ranked_op_indices(events)
        rank_of = {idx: rank for rank, idx in enumerate(ranked_ops)}
        n_lanes = max(1, -(-len(ranked_ops) // 62))

        api_by_corr: dict[int, Event] = {}
        for e in sorted(events, key=Event.sort_key):
            if e.category == Category.ACCEL_API and e.correlation is not None:
                api_by_corr.setdefault(e.correlation, e)
        fixed_path_ids: dict[tuple[str, ...], int] = {}
        fixed_of: dict[int, int] = {}  # event index -> path group
        if attribution is Attribution.CORRELATION:
            for i, event in enumerate(events):
                if event.category == Category.GPU and event.correlation is not None:
                    path = _launch_path(events, ranked_ops, api_by_corr[event.correlation].start)
                    fixed_of[i] = fixed_path_ids.setdefault(path, len(fixed_path_ids))
        fixed_paths_by_id = {v: k for k, v in fixed_path_ids.items()}
        n_groups = len(fixed_path_ids)

        cells: dict[tuple, int] = {}
        tracked = 0

        def cell_range(value: int) -> int:
            # First cell whose sample instant t0 + c*res is >= value.
            return -(-(value - t0) // resolution_ns)

        window = 0
        while window < n_cells or (n_cells == 0 and window == 0):
            w_lo = window
            w_hi = min(n_cells, window + _WINDOW_CELLS)
            width = w_hi - w_lo
            if width <= 0:
                break
            cat_diff = np.zeros((6, width + 1), dtype=np.int32)
            lane_diff = np.zeros((n_lanes, width + 1), dtype=np.int64)
            group_diff = np.zeros((n_groups, width + 1), dtype=np.int32)
            for i, event in enumerate(events):
                if event.duration <= 0:
                    continue
                c0 = max(cell_range(event.start), w_lo)
                c1 = min(cell_range(event.end), w_hi)
                if c0 >= c1:
                    continue
                if event.category == Category.OPERATION:
                    rank = rank_of[i]
                    lane_diff[rank // 62, c0 - w_lo] += 1 << (rank % 62)
                    lane_diff[rank // 62, c1 - w_lo] -= 1 << (rank % 62)
                elif i in fixed_of:
                    group_diff[fixed_of[i], c0 - w_lo] += 1
                    group_diff[fixed_of[i], c1 - w_lo] -= 1
                else:
                    cat_diff[int(event.category), c0 - w_lo] += 1
                    cat_diff[int(event.category), c1 - w_lo] -= 1

            cat_cover = np.cumsum(cat_diff[:, :-1], axis=1) > 0
            mask = np.zeros(width, dtype=np.uint8)
            for c in range(1, 6):
                mask |= cat_cover[c].astype(np.uint8) << (c - 1)
            lanes = np.cumsum(lane_diff[:, :-1], axis=1)
            groups = np.cumsum(group_diff[:, :-1], axis=1) > 0 if n_groups else None

            state = [mask] + [lanes[j] for j in range(n_lanes)]
            if groups is not None:
                state.extend(groups[j] for j in range(n_groups))
            change = np.zeros(width, dtype=bool)
            change[0] = True
            for column in state:
                change[1:] |= column[1:] != column[:-1]
            starts_idx = np.flatnonzero(change)
            bounds = np.append(starts_idx, width)

            for si in range(len(starts_idx)):
                a = int(starts_idx[si])
                length = int(bounds[si + 1]) - a
                m = int(mask[a])
                active_groups = [g for g in range(n_groups) if groups is not None and groups[g][a]]
                op_ranks = []
                for j in range(n_lanes):
                    bits = int(lanes[j][a])
                    base = j * 62
                    while bits:
                        low = bits & -bits
                        op_ranks.append(base + low.bit_length() - 1)
                        bits ^= low
                path = _dedupe_path([events[ranked_ops[r]].name for r in sorted(op_ranks)])
                ns = length * resolution_ns
                any_active = m != 0 or bool(active_groups)
                if any_active:
                    tracked += ns
                own_mask = m
                if active_groups:
                    for g in active_groups:
                        if fixed_paths_by_id[g] == path:
                            own_mask |= 1 << (int(Category.GPU) - 1)
                        else:
                            key = (fixed_paths_by_id[g], frozenset({Category.GPU}))
                            cells[key] = cells.get(key, 0) + ns
                if own_mask:
                    categories = frozenset(Category(c) for c in range(1, 6) if own_mask & (1 << (c - 1)))
                    key = (path, categories)
                    cells[key] = cells.get(key, 0) + ns
            window = w_hi
            if n_cells == 0:
                break

        for (path, categories), ns in cells.items():
            breakdown.cells[OverlapKey(pid, path, categories)] = ns
        breakdown.spans[pid] = (t0, t1)
        breakdown.untracked[pid] = (t1 - t0) - tracked

    return breakdown


# ---------------------------------------------------------------------------
# Canned workloads
# ---------------------------------------------------------------------------

def _preset_base(seed: int, iterations: int, processes: int) -> dict:
    return dict(
        seed=seed,
        iterations=iterations,
        processes=processes,
        phases=(
            PhaseSpec("inference", Category.BACKEND, calls=3, apis_per_call=2),
            PhaseSpec("simulation", Category.SIMULATOR, calls=5),
            PhaseSpec("backprop", Category.BACKEND, calls=2, apis_per_call=4),
        ),
        durations={
            "glue": Dist.uniform(1_500, 2_500),
            "backend": Dist.uniform(20_000, 60_000),
            "simulator": Dist.uniform(50_000, 150_000),
            "api": Dist.uniform(5_000, 15_000),
            "api_gap": Dist.uniform(1_000, 3_000),
            "kernel": Dist.uniform(10_000, 40_000),
            "launch_delay": Dist.constant(500),
        },
        kernel_prob=0.7,
    )


def preset_exact(seed: int = 1, iterations: int = 20, processes: int = 1) -> WorkloadSpec:
    """Constant overheads: calibration and correction close exactly."""
    base = _preset_base(seed, iterations, processes)
    return WorkloadSpec(
        name="exact",
        overheads={
            "annotation": Dist.constant(4_000),
            "transition": Dist.constant(1_000),
            "api_interception": Dist.constant(1_500),
        },
        api_internal={"launch": Dist.constant(3_000), "memcpy": Dist.constant(1_000)},
        **base,
    )


def preset_noisy(seed: int = 1, iterations: int = 20, processes: int = 1, cv: float = 0.3) -> WorkloadSpec:
    """Lognormal overheads around the exact preset's means."""
    base = _preset_base(seed, iterations, processes)
    return WorkloadSpec(
        name="noisy",
        overheads={
            "annotation": Dist.lognormal(4_000, cv),
            "transition": Dist.lognormal(1_000, cv),
            "api_interception": Dist.lognormal(1_500, cv),
        },
        api_internal={"launch": Dist.lognormal(3_000, cv), "memcpy": Dist.lognormal(1_000, cv)},
        **base,
    )


def preset_inflation(seed: int = 1, iterations: int = 40, processes: int = 1, cv: float = 0.3) -> WorkloadSpec:
    """Overheads heavy enough to roughly double the instrumented span."""
    base = _preset_base(seed, iterations, processes)
    return WorkloadSpec(
        name="inflation",
        overheads={
            "annotation": Dist.lognormal(40_000, cv),
            "transition": Dist.lognormal(25_000, cv),
            "api_interception": Dist.lognormal(12_000, cv),
        },
        api_internal={"launch": Dist.lognormal(9_000, cv), "memcpy": Dist.lognormal(7_000, cv)},
        **base,
    )


PRESETS = {
    "exact": preset_exact,
    "noisy": preset_noisy,
    "inflation": preset_inflation,
}


def expand_leaf_trace(clock_domain: int = 2) -> Trace:
    """The worked two-cell overlap example: a tree-expansion operation whose
    backend call runs 2.49 ms, the final 1.7 ms overlapping a GPU kernel."""
    events = [
        Event(1, MAIN_TID, Category.OPERATION, "expand_leaf", 0, 2_490_000),
        Event(1, MAIN_TID, Category.BACKEND, "inference_backend", 0, 2_490_000),
        Event(1, GPU_STREAM_TID, Category.GPU, "kernel", 790_000, 1_700_000),
    ]
    return Trace(clock_domain, events, [ProcessMeta(1, "mcts")])


def sparse_kernel_trace(
    kernel_period_ns: int = 100_000_000,
    kernel_ns: int = 1_000,
    total_ns: int = 10_000_000_000,
    clock_domain: int = 3,
) -> Trace:
    """Tiny kernel every period over a long span: the utilization illusion."""
    events = [Event(1, MAIN_TID, Category.HIGH_LEVEL, "script", 0, total_ns)]
    for start in range(0, total_ns, kernel_period_ns):
        events.append(Event(1, GPU_STREAM_TID, Category.GPU, "kernel", start, kernel_ns))
    return Trace(clock_domain, events, [ProcessMeta(1, "worker")])


def minigo_like_traces(
    seed: int = 7,
    workers: int = 16,
    scale: int = 1000,
    clock_domain: int = 4,
) -> list[Trace]:
    """Parent plus self-play workers, scaled down from the thousands-of-seconds
    regime: each worker's span is ~5.08e12/scale ns with ~2e10/scale ns of
    GPU kernel time (sub-1% GPU busy)."""
    rng = random.Random(seed)
    span = 5_080_000_000_000 // scale
    gpu_total = 20_000_000_000 // scale
    n_kernels = 2000
    k_dur = gpu_total // n_kernels
    stride = span // (n_kernels + 1)

    traces: list[Trace] = []
    parent_pid = 1
    parent_span = span + span // 20
    parent_events = [
        Event(parent_pid, MAIN_TID, Category.HIGH_LEVEL, "script", 0, parent_span),
        Event(parent_pid, MAIN_TID, Category.OPERATION, "coordinate", 0, span),
        Event(parent_pid, MAIN_TID, Category.OPERATION, "update", span, parent_span - span),
        Event(parent_pid, MAIN_TID, Category.BACKEND, "update_backend", span, (parent_span - span) // 2),
    ]
    traces.append(Trace(clock_domain, parent_events, [ProcessMeta(parent_pid, "trainer")]))

    for w in range(workers):
        pid = 2 + w
        events = [
            Event(pid, MAIN_TID, Category.HIGH_LEVEL, "script", 0, span),
            Event(pid, MAIN_TID, Category.OPERATION, "selfplay", 0, span),
        ]
        for k in range(n_kernels):
            base = stride * (k + 1) + rng.randint(-stride // 4, stride // 4)
            api_dur = 15_000
            events.append(Event(pid, MAIN_TID, Category.ACCEL_API, "launch", base, api_dur, k + 1))
            events.append(Event(pid, GPU_STREAM_TID, Category.GPU, "kernel", base + 5_000, k_dur, k + 1))
        for b in range(100):
            start = (span // 100) * b + 1_000
            events.append(Event(pid, MAIN_TID, Category.BACKEND, "inference_backend", start, span // 400))
        meta = ProcessMeta(pid, f"selfplay_worker_{w}", parent=parent_pid, fork_ns=0, join_ns=span)
        traces.append(Trace(clock_domain, events, [meta]))
    return traces
