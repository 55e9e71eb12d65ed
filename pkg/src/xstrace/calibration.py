"""Book-keeping overhead calibration.

Two estimators: delta calibration (total runtime increase divided by hook
count, for hook kinds whose cost does not depend on the call site) and
difference-of-average calibration (per-API mean with profiling enabled minus
mean with it disabled, for opaque per-API inflation that cannot be toggled
in isolation).

A calibration ladder is an ordered set of runs, each enabling one more hook
class on top of the previous leg:

    off -> +annotations -> +transitions -> +API interception -> +API internal

so each leg's runtime delta isolates exactly one hook kind. Means are exact
rationals internally and render as plain text at the boundary, keeping
profiles diffable, hand-editable, and bit-reproducible.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

PROFILE_HEADER = "xstrace-profile v1"

LEG_OFF = "off"
LEG_ANNOTATIONS = "annotations"
LEG_TRANSITIONS = "transitions"
LEG_INTERCEPTION = "interception"
LEG_INTERNAL = "internal"
LADDER_LEGS = (LEG_OFF, LEG_ANNOTATIONS, LEG_TRANSITIONS, LEG_INTERCEPTION, LEG_INTERNAL)

HOOK_ANNOTATION = "annotation"
HOOK_TRANSITION = "transition"
HOOK_API_INTERCEPTION = "api_interception"
HOOK_API_INTERNAL = "api_internal"
HOOK_KINDS = (HOOK_ANNOTATION, HOOK_TRANSITION, HOOK_API_INTERCEPTION, HOOK_API_INTERNAL)


class UnpairedApiError(ValueError):
    """An API name present on one side of a difference-of-average input only."""

    def __init__(self, apis: Sequence[str]):
        self.apis = tuple(sorted(apis))
        super().__init__(f"unpaired API: {', '.join(self.apis)}")


class IncompleteLadderError(ValueError):
    """A ladder leg required by build_profile is missing."""

    def __init__(self, leg: str):
        self.leg = leg
        super().__init__(f"incomplete calibration ladder: missing leg '{leg}'")


def delta_calibrate(total_on, total_off, n_sites: int, warnings: Optional[list] = None) -> Fraction:
    """Mean per-site overhead: max(0, on - off) / n_sites, exact rational.

    A negative delta is run-to-run noise, clamps to zero, and is flagged
    through ``warnings`` when a list is supplied.
    """
    if n_sites < 1:
        raise ValueError(f"n_sites must be >= 1, got {n_sites}")
    delta = Fraction(total_on) - Fraction(total_off)
    if delta < 0:
        if warnings is not None:
            warnings.append(f"negative delta {float(delta):.1f} ns clamped to 0")
        return Fraction(0)
    return delta / n_sites


def diff_of_avg_calibrate(
    enabled: dict[str, Sequence[int]],
    disabled: dict[str, Sequence[int]],
    warnings: Optional[list] = None,
) -> dict[str, Fraction]:
    """Per-API overhead: mean(enabled) - mean(disabled), clamped at zero."""
    missing = set(enabled) ^ set(disabled)
    missing |= {k for k in set(enabled) & set(disabled) if not enabled[k] or not disabled[k]}
    if missing:
        raise UnpairedApiError(sorted(missing))
    out: dict[str, Fraction] = {}
    for api in sorted(enabled):
        mean_on = Fraction(sum(enabled[api]), len(enabled[api]))
        mean_off = Fraction(sum(disabled[api]), len(disabled[api]))
        value = mean_on - mean_off
        if value < 0:
            if warnings is not None:
                warnings.append(f"negative difference for API '{api}' clamped to 0")
            value = Fraction(0)
        out[api] = value
    return out


@dataclass(frozen=True)
class RunSummary:
    """Aggregates of one calibration run."""

    leg: str
    total_ns: int
    annotation_sites: int
    transition_sites: int
    api_sites: int
    api_samples: dict[str, tuple[int, ...]] = field(default_factory=dict)
    run_id: str = ""

    def to_json(self) -> str:
        return json.dumps(
            {
                "leg": self.leg,
                "total_ns": self.total_ns,
                "annotation_sites": self.annotation_sites,
                "transition_sites": self.transition_sites,
                "api_sites": self.api_sites,
                "api_samples": {k: list(v) for k, v in sorted(self.api_samples.items())},
                "run_id": self.run_id,
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "RunSummary":
        raw = json.loads(text)
        if raw.get("leg") not in LADDER_LEGS:
            raise ValueError(f"unknown ladder leg {raw.get('leg')!r}")
        return cls(
            leg=raw["leg"],
            total_ns=int(raw["total_ns"]),
            annotation_sites=int(raw["annotation_sites"]),
            transition_sites=int(raw["transition_sites"]),
            api_sites=int(raw["api_sites"]),
            api_samples={k: tuple(int(x) for x in v) for k, v in raw.get("api_samples", {}).items()},
            run_id=str(raw.get("run_id", "")),
        )


@dataclass(frozen=True)
class CalibrationProfile:
    """Mean book-keeping overhead per hook kind, reusable across runs."""

    annotation_ns: Fraction
    transition_ns: Fraction
    api_interception_ns: Fraction
    api_internal_ns: dict[str, Fraction]
    provenance: tuple[str, ...] = ()

    def is_zero(self) -> bool:
        return (
            self.annotation_ns == 0
            and self.transition_ns == 0
            and self.api_interception_ns == 0
            and all(v == 0 for v in self.api_internal_ns.values())
        )

    def to_text(self) -> str:
        lines = [PROFILE_HEADER]
        lines.append(f"annotation = {_format_ns(self.annotation_ns)}")
        lines.append(f"transition = {_format_ns(self.transition_ns)}")
        lines.append(f"api_interception = {_format_ns(self.api_interception_ns)}")
        for api in sorted(self.api_internal_ns):
            lines.append(f"api_internal.{api} = {_format_ns(self.api_internal_ns[api])}")
        for note in self.provenance:
            lines.append(f"# {note}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CalibrationProfile":
        lines = text.splitlines()
        if not lines or lines[0].strip() != PROFILE_HEADER:
            raise ValueError(f"not a calibration profile: expected header '{PROFILE_HEADER}'")
        values: dict[str, Fraction] = {}
        internal: dict[str, Fraction] = {}
        provenance: list[str] = []
        for line in lines[1:]:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                provenance.append(line.lstrip("# "))
                continue
            if "=" not in line:
                raise ValueError(f"bad profile line: {line!r}")
            key, _, raw = line.partition("=")
            key = key.strip()
            value = _parse_ns(raw.strip())
            if value < 0:
                raise ValueError(f"negative overhead for {key!r}")
            if key.startswith("api_internal."):
                internal[key[len("api_internal.") :]] = value
            elif key in ("annotation", "transition", "api_interception"):
                values[key] = value
            else:
                raise ValueError(f"unknown profile key {key!r}")
        for required in ("annotation", "transition", "api_interception"):
            if required not in values:
                raise ValueError(f"profile missing key {required!r}")
        return cls(
            annotation_ns=values["annotation"],
            transition_ns=values["transition"],
            api_interception_ns=values["api_interception"],
            api_internal_ns=internal,
            provenance=tuple(provenance),
        )

    def write(self, path: Union[str, os.PathLike]) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def read(cls, path: Union[str, os.PathLike]) -> "CalibrationProfile":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def zero(cls, api_names: Sequence[str] = ()) -> "CalibrationProfile":
        return cls(Fraction(0), Fraction(0), Fraction(0),
                   {name: Fraction(0) for name in api_names}, ("zero profile",))


def _format_ns(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def _parse_ns(raw: str) -> Fraction:
    try:
        return Fraction(raw)
    except ValueError as exc:
        raise ValueError(f"bad overhead value {raw!r}") from exc


def _combine_leg(summaries: list[RunSummary]):
    total = Fraction(sum(s.total_ns for s in summaries), len(summaries))
    ann = Fraction(sum(s.annotation_sites for s in summaries), len(summaries))
    trans = Fraction(sum(s.transition_sites for s in summaries), len(summaries))
    api = Fraction(sum(s.api_sites for s in summaries), len(summaries))
    samples: dict[str, list[int]] = {}
    for summary in summaries:
        for name, values in summary.api_samples.items():
            samples.setdefault(name, []).extend(values)
    return total, ann, trans, api, samples


def build_profile(summaries: Iterable[RunSummary]) -> CalibrationProfile:
    """Compose the calibration ladder into a reusable profile.

    Repeated summaries for one leg are averaged (totals, site counts) with
    their API samples pooled. Raises IncompleteLadderError when a leg is
    absent, so a profile can never silently mix hook kinds.
    """
    by_leg: dict[str, list[RunSummary]] = {}
    for summary in summaries:
        by_leg.setdefault(summary.leg, []).append(summary)
    for leg in LADDER_LEGS:
        if leg not in by_leg:
            raise IncompleteLadderError(leg)

    combined = {leg: _combine_leg(by_leg[leg]) for leg in LADDER_LEGS}
    warnings: list[str] = []

    def leg_delta(leg: str, prev: str, which: int, hook: str) -> Fraction:
        # A workload that never fires this hook kind leaves its overhead
        # unidentifiable; it is also never subtracted, so zero is safe.
        count = combined[leg][which]
        if count <= 0:
            warnings.append(f"leg '{leg}' has no {hook} sites; overhead recorded as 0")
            return Fraction(0)
        return delta_calibrate(combined[leg][0], combined[prev][0], count, warnings)

    annotation = leg_delta(LEG_ANNOTATIONS, LEG_OFF, 1, HOOK_ANNOTATION)
    transition = leg_delta(LEG_TRANSITIONS, LEG_ANNOTATIONS, 2, HOOK_TRANSITION)
    interception = leg_delta(LEG_INTERCEPTION, LEG_TRANSITIONS, 3, HOOK_API_INTERCEPTION)
    internal = diff_of_avg_calibrate(
        combined[LEG_INTERNAL][4], combined[LEG_INTERCEPTION][4], warnings
    )

    provenance = []
    for leg in LADDER_LEGS:
        runs = by_leg[leg]
        ids = ",".join(s.run_id for s in runs if s.run_id) or "-"
        provenance.append(f"leg {leg}: {len(runs)} run(s) [{ids}], mean total {float(combined[leg][0]):.0f} ns")
    provenance.extend(warnings)

    return CalibrationProfile(
        annotation_ns=annotation,
        transition_ns=transition,
        api_interception_ns=interception,
        api_internal_ns=internal,
        provenance=tuple(provenance),
    )
