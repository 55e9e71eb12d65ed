"""Annotation and interception SDK emitting cross-stack trace directories.

Instrument a program with operation annotations and library wrappers; the
session writes the chunked binary trace format that the xstrace analyzer
consumes (the format is the only coupling between the two packages).

    from annotrace import ProfilerSession

    with ProfilerSession("out/trace", process_name="train") as session:
        sim = session.wrap_library(RealSimulator(), "simulator")
        for _ in range(steps):
            with session.operation("simulation"):
                observation = sim.step(action)
"""

from .session import (
    DEFAULT_FLUSH_THRESHOLD,
    GpuRecord,
    LibraryProxy,
    ProfilerSession,
    RejectedRecord,
    SessionCounters,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_FLUSH_THRESHOLD",
    "GpuRecord",
    "LibraryProxy",
    "ProfilerSession",
    "RejectedRecord",
    "SessionCounters",
]
