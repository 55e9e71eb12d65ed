"""Cross-stack trace analysis: overlap attribution, calibration, correction."""

from .model import (
    Category,
    Event,
    InvalidTraceError,
    ProcessMeta,
    Trace,
    Violation,
    validate_trace,
)
from .overlap import (
    Attribution,
    Breakdown,
    OverlapKey,
    TransitionCounts,
    compute_overlap,
    count_transitions,
)
from .calibration import (
    CalibrationProfile,
    IncompleteLadderError,
    RunSummary,
    UnpairedApiError,
    build_profile,
    delta_calibrate,
    diff_of_avg_calibrate,
)
from .correction import CorrectionReport, UncalibratedHookError, correct_trace, correction_bias
from .metrics import busy_fraction, sampled_utilization, summarize
from .procview import ProcessTree, build_process_tree
from .synth import (
    Dist,
    GroundTruth,
    PhaseSpec,
    WorkloadSpec,
    brute_force_overlap,
    generate_calibration_ladder,
    generate_workload,
)
from .traceio import (
    IncompleteTraceError,
    TraceFormatError,
    TruncatedTraceError,
    read_trace,
    write_trace,
)

__version__ = "0.1.0"

__all__ = [
    "Attribution",
    "Breakdown",
    "CalibrationProfile",
    "Category",
    "CorrectionReport",
    "Dist",
    "Event",
    "GroundTruth",
    "IncompleteLadderError",
    "IncompleteTraceError",
    "InvalidTraceError",
    "OverlapKey",
    "PhaseSpec",
    "ProcessMeta",
    "ProcessTree",
    "RunSummary",
    "Trace",
    "TraceFormatError",
    "TransitionCounts",
    "TruncatedTraceError",
    "UncalibratedHookError",
    "UnpairedApiError",
    "Violation",
    "WorkloadSpec",
    "brute_force_overlap",
    "build_process_tree",
    "build_profile",
    "busy_fraction",
    "compute_overlap",
    "correct_trace",
    "correction_bias",
    "count_transitions",
    "delta_calibrate",
    "diff_of_avg_calibrate",
    "generate_calibration_ladder",
    "generate_workload",
    "read_trace",
    "sampled_utilization",
    "summarize",
    "validate_trace",
    "write_trace",
]
