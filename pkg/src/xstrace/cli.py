"""Command-line workflow: analyze, calibrate, correct, gen, util, tree.

Exit codes: 0 success, 1 validation/format error, 2 argument error. Errors
also land on stderr as line-delimited structured text (error<TAB>kind<TAB>
message) so scripts never have to parse prose. Machine-readable reports are
versioned tab-separated text; given identical inputs and flags every command
writes byte-identical output.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import __version__
from .calibration import (
    CalibrationProfile,
    IncompleteLadderError,
    RunSummary,
    UnpairedApiError,
    build_profile,
)
from .correction import CorrectionReport, UncalibratedHookError, correct_trace, correction_bias
from .metrics import busy_fraction, sampled_utilization, summarize
from .model import Category, InvalidTraceError, Trace, pid_spans
from .overlap import Attribution, Breakdown, compute_overlap, count_transitions
from .procview import build_process_tree, render_tree, to_dot
from .synth import PRESETS, WorkloadSpec, generate_calibration_ladder, generate_workload
from .traceio import IncompleteTraceError, TraceFormatError, TruncatedTraceError, read_trace, write_trace

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_ARGUMENT = 2

REPORT_HEADER = "xstrace-report\t1"
CORRECTION_HEADER = "xstrace-correction\t1"

DEFAULT_PERIOD_NS = 166_666_667  # 1/6 s, the coarse sampler's fastest cadence

RESOURCE_ORDER = (
    Category.HIGH_LEVEL,
    Category.BACKEND,
    Category.SIMULATOR,
    Category.ACCEL_API,
    Category.GPU,
)


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int):
        super().__init__(message)
        self.kind = kind
        self.code = code


def _fail_argument(message: str) -> CliError:
    return CliError("argument", message, EXIT_ARGUMENT)


def _emit_error(err: CliError) -> int:
    sys.stderr.write(f"error\t{err.kind}\t{err}\n")
    return err.code


def _load_trace(path: str) -> Trace:
    try:
        return read_trace(path)
    except IncompleteTraceError as exc:
        raise CliError("incomplete-trace", str(exc), EXIT_INVALID) from exc
    except TruncatedTraceError as exc:
        raise CliError("truncated-trace", str(exc), EXIT_INVALID) from exc
    except TraceFormatError as exc:
        raise CliError("format-error", str(exc), EXIT_INVALID) from exc
    except OSError as exc:
        raise CliError("io-error", str(exc), EXIT_INVALID) from exc


def _load_profile(path: str) -> CalibrationProfile:
    try:
        return CalibrationProfile.read(path)
    except OSError as exc:
        raise _fail_argument(f"cannot read profile: {exc}") from exc
    except ValueError as exc:
        raise _fail_argument(f"bad profile {path}: {exc}") from exc


def _analysis_report(trace: Trace, breakdown: Breakdown) -> str:
    lines = [REPORT_HEADER]
    for row in summarize(breakdown):
        path_label, cat_label = row.labels()
        kind = "untracked" if row.categories is None else "breakdown"
        lines.append(f"{kind}\t{row.pid}\t{path_label}\t{cat_label}\t{row.ns}\t{row.percent:.6f}")
    for pid in sorted(breakdown.spans):
        lines.append(f"span\t{pid}\t{breakdown.span_ns(pid)}")
    counts = count_transitions(trace)
    for src, dst, count in counts.counts:
        lines.append(f"transition\t{src.name}\t{dst.name}\t{count}")
    try:
        for category in RESOURCE_ORDER:
            lines.append(f"busy\t{category.name}\t{busy_fraction(trace, category):.9f}")
    except ValueError:
        pass  # zero-length span: busy fractions undefined
    return "\n".join(lines) + "\n"


def _print_analysis(trace: Trace, breakdown: Breakdown, out) -> None:
    out.write(f"{'pid':>6} {'operation path':<28} {'categories':<34} {'ns':>14} {'%':>9}\n")
    for row in summarize(breakdown):
        path_label, cat_label = row.labels()
        out.write(f"{row.pid:>6} {path_label:<28} {cat_label:<34} {row.ns:>14} {row.percent:>8.3f}%\n")
    counts = count_transitions(trace)
    out.write("transitions: ")
    out.write("  ".join(f"{src.name}->{dst.name}={count}" for src, dst, count in counts.counts))
    out.write("\n")
    try:
        fractions = [(c, busy_fraction(trace, c)) for c in RESOURCE_ORDER]
    except ValueError:
        return
    out.write("busy fractions: ")
    out.write("  ".join(f"{c.name}={frac:.4f}" for c, frac in fractions))
    out.write("\n")


def _plot_breakdown(breakdown: Breakdown, path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = [r for r in summarize(breakdown) if r.categories is not None]
    bars: dict[tuple[int, tuple[str, ...]], list] = {}
    for row in rows:
        bars.setdefault((row.pid, row.path), []).append(row)
    labels = [f"pid{pid}:{'/'.join(p) if p else '-'}" for pid, p in bars]
    fig, ax = plt.subplots(figsize=(10, max(2.5, 0.5 * len(bars) + 1.5)))
    left = [0.0] * len(bars)
    seen: set[str] = set()
    for segment in range(max(len(v) for v in bars.values())):
        widths, names = [], []
        for i, key in enumerate(bars):
            if segment < len(bars[key]):
                row = bars[key][segment]
                widths.append(row.ns / 1e6)
                names.append("+".join(c.name for c in sorted(row.categories)))
            else:
                widths.append(0.0)
                names.append("")
        label = next((n for n in names if n and n not in seen), None)
        if label:
            seen.add(label)
        ax.barh(range(len(bars)), widths, left=left, label=label)
        left = [l + w for l, w in zip(left, widths)]
    ax.set_yticks(range(len(bars)), labels)
    ax.set_xlabel("ms")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_analyze(args) -> int:
    trace = _load_trace(args.trace_dir)
    profile = _load_profile(args.profile) if args.profile else None
    try:
        if profile is not None:
            trace, _ = correct_trace(trace, profile)
        attribution = Attribution(args.attribution)
        breakdown = compute_overlap(trace, attribution)
    except InvalidTraceError as exc:
        raise CliError("invalid-trace", str(exc), EXIT_INVALID) from exc
    except UncalibratedHookError as exc:
        raise _fail_argument(str(exc)) from exc

    report = _analysis_report(trace, breakdown)
    report_path = Path(args.report_out) if args.report_out else Path(args.trace_dir) / "analysis.tsv"
    report_path.write_text(report, encoding="utf-8")
    _print_analysis(trace, breakdown, sys.stdout)
    sys.stdout.write(f"report written to {report_path}\n")
    if args.plot:
        try:
            _plot_breakdown(breakdown, args.plot)
        except Exception as exc:  # plotting never affects analysis status
            sys.stderr.write(f"warning\tplot\t{exc}\n")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    summaries = []
    for path in args.summaries:
        try:
            summaries.append(RunSummary.from_json(Path(path).read_text(encoding="utf-8")))
        except OSError as exc:
            raise _fail_argument(f"cannot read run summary {path}: {exc}") from exc
        except (ValueError, KeyError) as exc:
            raise _fail_argument(f"bad run summary {path}: {exc}") from exc
    try:
        profile = build_profile(summaries)
    except (IncompleteLadderError, UnpairedApiError, ValueError) as exc:
        raise _fail_argument(str(exc)) from exc
    profile.write(args.out)
    sys.stdout.write(f"profile written to {args.out}\n")
    return EXIT_OK


def _correction_report_text(report: CorrectionReport) -> str:
    lines = [CORRECTION_HEADER]
    for pid in sorted(report.removed_ns):
        for kind in sorted(report.removed_ns[pid]):
            lines.append(f"removed\t{pid}\t{kind}\t{report.removed_ns[pid][kind]}")
    for pid in sorted(report.shortfall_ns):
        for kind in sorted(report.shortfall_ns[pid]):
            if report.shortfall_ns[pid][kind]:
                lines.append(f"shortfall\t{pid}\t{kind}\t{report.shortfall_ns[pid][kind]}")
    lines.append(f"total\toriginal\t{report.original_total_ns}")
    lines.append(f"total\tcorrected\t{report.corrected_total_ns}")
    if report.bias is not None:
        lines.append(f"bias\t{report.bias:+.6f}")
    return "\n".join(lines) + "\n"


def cmd_correct(args) -> int:
    trace = _load_trace(args.trace_dir)
    profile = _load_profile(args.profile)
    uninstrumented_total = args.uninstrumented_total
    if args.uninstrumented_dir:
        reference = _load_trace(args.uninstrumented_dir)
        uninstrumented_total = sum(hi - lo for lo, hi in pid_spans(reference).values())
    try:
        corrected, report = correct_trace(trace, profile)
    except InvalidTraceError as exc:
        raise CliError("invalid-trace", str(exc), EXIT_INVALID) from exc
    except UncalibratedHookError as exc:
        raise _fail_argument(str(exc)) from exc
    if uninstrumented_total is not None:
        if uninstrumented_total <= 0:
            raise _fail_argument("uninstrumented total must be > 0")
        report.bias = correction_bias(report.corrected_total_ns, uninstrumented_total)
    write_trace(corrected, args.out)
    text = _correction_report_text(report)
    report_path = Path(args.report_out) if args.report_out else Path(args.out) / "correction.tsv"
    report_path.write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_gen(args) -> int:
    if args.preset:
        if args.preset not in PRESETS:
            raise _fail_argument(f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
        spec = PRESETS[args.preset](seed=args.seed if args.seed is not None else 1)
    else:
        if not args.spec:
            raise _fail_argument("either a spec file or --preset is required")
        try:
            spec = WorkloadSpec.from_json(Path(args.spec).read_text(encoding="utf-8"))
        except OSError as exc:
            raise _fail_argument(f"cannot read spec: {exc}") from exc
        except (ValueError, KeyError) as exc:
            raise _fail_argument(f"bad workload spec: {exc}") from exc
        if args.seed is not None:
            spec = dataclasses.replace(spec, seed=args.seed)

    uninstrumented, instrumented, truth = generate_workload(spec)
    write_trace(uninstrumented, args.out_uninstrumented)
    write_trace(instrumented, args.out_instrumented)
    if args.truth:
        Path(args.truth).write_text(ground_truth_json(truth), encoding="utf-8")
    if args.ladder_dir:
        ladder_dir = Path(args.ladder_dir)
        ladder_dir.mkdir(parents=True, exist_ok=True)
        for leg, summary in generate_calibration_ladder(spec).items():
            (ladder_dir / f"{leg}.json").write_text(summary.to_json(), encoding="utf-8")
    sys.stdout.write(
        f"generated {len(uninstrumented.events)} uninstrumented / {len(instrumented.events)} instrumented events\n"
    )
    return EXIT_OK


def ground_truth_json(truth) -> str:
    cells = [
        {
            "pid": key.pid,
            "path": list(key.path),
            "categories": [c.name for c in sorted(key.categories)],
            "ns": ns,
        }
        for key, ns in sorted(
            truth.uninstrumented_breakdown.cells.items(),
            key=lambda kv: (kv[0].pid, kv[0].path, kv[0].category_label()),
        )
    ]
    return json.dumps(
        {
            "breakdown": cells,
            "spans": {str(pid): list(span) for pid, span in sorted(truth.uninstrumented_breakdown.spans.items())},
            "untracked": {str(pid): ns for pid, ns in sorted(truth.uninstrumented_breakdown.untracked.items())},
            "site_counts": truth.site_counts,
            "injected_ns": truth.injected_ns,
            "injected_api_internal_ns": truth.injected_api_internal_ns,
            "transitions": {f"{src.name}->{dst.name}": count for (src, dst), count in sorted(truth.transitions.items())},
            "gpu_busy_ns": {str(pid): ns for pid, ns in sorted(truth.gpu_busy_ns.items())},
            "uninstrumented_span_ns": {str(pid): ns for pid, ns in sorted(truth.uninstrumented_span_ns.items())},
            "instrumented_span_ns": {str(pid): ns for pid, ns in sorted(truth.instrumented_span_ns.items())},
        },
        indent=2,
        sort_keys=True,
    )


def cmd_util(args) -> int:
    trace = _load_trace(args.trace_dir)
    try:
        sampled = sampled_utilization(trace, args.period_ns)
        busy = busy_fraction(trace, Category.GPU)
    except InvalidTraceError as exc:
        raise CliError("invalid-trace", str(exc), EXIT_INVALID) from exc
    except ValueError as exc:
        raise _fail_argument(str(exc)) from exc
    sys.stdout.write(REPORT_HEADER + "\n")
    sys.stdout.write(f"sampled_utilization\t{args.period_ns}\t{sampled:.9f}\n")
    sys.stdout.write(f"busy\tGPU\t{busy:.9f}\n")
    return EXIT_OK


def cmd_tree(args) -> int:
    traces = [_load_trace(path) for path in args.trace_dirs]
    try:
        tree = build_process_tree(traces)
    except InvalidTraceError as exc:
        raise CliError("invalid-trace", str(exc), EXIT_INVALID) from exc
    except ValueError as exc:
        raise _fail_argument(str(exc)) from exc
    sys.stdout.write(render_tree(tree) + "\n")
    if args.dot:
        Path(args.dot).write_text(to_dot(tree), encoding="utf-8")
        sys.stdout.write(f"graph written to {args.dot}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xstrace",
        description="Cross-stack trace analysis: overlap attribution, calibration, overhead correction.",
    )
    parser.add_argument("--version", action="version", version=f"xstrace {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="per-operation overlap breakdown, transitions, busy fractions")
    p.add_argument("trace_dir")
    p.add_argument("--attribution", choices=[a.value for a in Attribution], default=Attribution.INSTANT.value)
    p.add_argument("--profile", help="calibration profile; correction is applied before analysis")
    p.add_argument("--report-out", help="machine-readable report path (default: <trace_dir>/analysis.tsv)")
    p.add_argument("--plot", help="write a stacked-bar chart of the breakdown to this file")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("calibrate", help="build a calibration profile from ladder run summaries")
    p.add_argument("summaries", nargs="+", help="run summary JSON files (one per ladder leg)")
    p.add_argument("--out", required=True, help="profile output path")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("correct", help="subtract calibrated overhead from a trace")
    p.add_argument("trace_dir")
    p.add_argument("--profile", required=True)
    p.add_argument("--out", required=True, help="corrected trace directory")
    p.add_argument("--report-out", help="correction report path (default: <out>/correction.tsv)")
    p.add_argument("--uninstrumented-total", type=int, help="reference total ns for bias")
    p.add_argument("--uninstrumented-dir", help="reference trace directory for bias")
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("gen", help="generate a synthetic workload run pair with ground truth")
    p.add_argument("spec", nargs="?", help="workload spec JSON (see docs/workload-config.md)")
    p.add_argument("--preset", help=f"canned spec: {', '.join(sorted(PRESETS))}")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-uninstrumented", required=True)
    p.add_argument("--out-instrumented", required=True)
    p.add_argument("--truth", help="ground-truth JSON output path")
    p.add_argument("--ladder-dir", help="also emit calibration ladder run summaries here")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("util", help="sampled GPU utilization next to the true busy fraction")
    p.add_argument("trace_dir")
    p.add_argument("--period-ns", type=int, default=DEFAULT_PERIOD_NS)
    p.set_defaults(func=cmd_util)

    p = sub.add_parser("tree", help="multi-process fork/join view")
    p.add_argument("trace_dirs", nargs="+")
    p.add_argument("--dot", help="write a graph description file")
    p.set_defaults(func=cmd_tree)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage, matching the argument-error contract
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CliError as err:
        return _emit_error(err)
    except InvalidTraceError as exc:
        return _emit_error(CliError("invalid-trace", str(exc), EXIT_INVALID))


if __name__ == "__main__":
    sys.exit(main())
