"""Multi-process aggregation: fork/join process tree with per-node stats."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from .model import Category, ProcessMeta, Trace, pid_spans, require_valid
from .overlap import Attribution, Breakdown, compute_overlap
from .metrics import _union_ns


@dataclass(frozen=True)
class ProcessNode:
    pid: int
    name: str
    span_ns: int
    gpu_busy_ns: int
    breakdown: Breakdown
    meta: ProcessMeta

    @property
    def gpu_busy_fraction(self) -> float:
        return self.gpu_busy_ns / self.span_ns if self.span_ns else 0.0


@dataclass
class ProcessTree:
    nodes: dict[int, ProcessNode] = field(default_factory=dict)
    children: dict[int, tuple[int, ...]] = field(default_factory=dict)
    roots: tuple[int, ...] = ()
    warnings: tuple[str, ...] = ()

    def walk(self):
        """Deterministic depth-first traversal: (depth, node) pairs."""
        def visit(pid: int, depth: int):
            yield depth, self.nodes[pid]
            for child in self.children.get(pid, ()):
                yield from visit(child, depth + 1)

        for root in self.roots:
            yield from visit(root, 0)


def build_process_tree(traces: Sequence[Trace], attribution: Attribution = Attribution.INSTANT) -> ProcessTree:
    """Assemble per-process stats into the fork/join forest.

    Every pid across the inputs must be unique and all traces must share one
    clock domain. A parent reference naming an unknown pid demotes the child
    to a root with a warning instead of failing the whole view.
    """
    warnings: list[str] = []
    nodes: dict[int, ProcessNode] = {}
    parent_of: dict[int, Optional[int]] = {}

    clock_domains = {t.clock_domain for t in traces}
    if len(clock_domains) > 1:
        raise ValueError(f"clock domain mismatch across traces: {sorted(clock_domains)}")

    for trace in traces:
        require_valid(trace)
        spans = pid_spans(trace)
        for meta in sorted(trace.processes, key=lambda m: m.pid):
            if meta.pid in nodes:
                raise ValueError(f"duplicate pid {meta.pid} across process-tree inputs")
            events = trace.events_for_pid(meta.pid)
            sub = Trace(trace.clock_domain, events, [meta])
            breakdown = compute_overlap(sub, attribution)
            lo, hi = spans.get(meta.pid, (0, 0))
            nodes[meta.pid] = ProcessNode(
                pid=meta.pid,
                name=meta.name,
                span_ns=hi - lo,
                gpu_busy_ns=_union_ns(sub, Category.GPU),
                breakdown=breakdown,
                meta=meta,
            )
            parent_of[meta.pid] = meta.parent

    children: dict[int, list[int]] = {}
    roots: list[int] = []
    for pid in sorted(nodes):
        parent = parent_of[pid]
        if parent is None:
            roots.append(pid)
        elif parent not in nodes:
            warnings.append(f"pid {pid} names unknown parent {parent}; treated as a root")
            roots.append(pid)
        else:
            children.setdefault(parent, []).append(pid)
            meta = nodes[pid].meta
            parent_node = nodes[parent]
            if meta.fork_ns is not None and parent_node.span_ns:
                plo, phi = pid_spans_of(parent_node)
                if not (plo <= meta.fork_ns <= phi):
                    warnings.append(
                        f"pid {pid} fork time {meta.fork_ns} outside parent {parent} span"
                    )

    return ProcessTree(
        nodes=nodes,
        children={k: tuple(sorted(v)) for k, v in children.items()},
        roots=tuple(sorted(roots)),
        warnings=tuple(warnings),
    )


def pid_spans_of(node: ProcessNode) -> tuple[int, int]:
    span = node.breakdown.spans.get(node.pid)
    return span if span is not None else (0, 0)


def render_tree(tree: ProcessTree) -> str:
    """Indented per-process table."""
    lines = [f"{'process':<40} {'span ms':>12} {'gpu ms':>10} {'gpu %':>8}"]
    for depth, node in tree.walk():
        label = "  " * depth + f"{node.name} (pid {node.pid})"
        lines.append(
            f"{label:<40} {node.span_ns / 1e6:>12.3f} {node.gpu_busy_ns / 1e6:>10.3f} "
            f"{100.0 * node.gpu_busy_fraction:>7.2f}%"
        )
    for warning in tree.warnings:
        lines.append(f"warning: {warning}")
    return "\n".join(lines)


def to_dot(tree: ProcessTree) -> str:
    """Graph description for external visualization."""
    lines = ["digraph processes {", "  rankdir=TB;", "  node [shape=box];"]
    for _, node in tree.walk():
        label = (
            f"{node.name}\\npid {node.pid}\\nspan {node.span_ns / 1e6:.3f} ms"
            f"\\ngpu {node.gpu_busy_ns / 1e6:.3f} ms ({100.0 * node.gpu_busy_fraction:.2f}%)"
        )
        lines.append(f'  p{node.pid} [label="{label}"];')
    for pid in sorted(tree.children):
        for child in tree.children[pid]:
            meta = tree.nodes[child].meta
            attrs = []
            if meta.fork_ns is not None:
                attrs.append(f"fork={meta.fork_ns}")
            if meta.join_ns is not None:
                attrs.append(f"join={meta.join_ns}")
            label = f' [label="{" ".join(attrs)}"]' if attrs else ""
            lines.append(f"  p{pid} -> p{child}{label};")
    lines.append("}")
    return "\n".join(lines) + "\n"
