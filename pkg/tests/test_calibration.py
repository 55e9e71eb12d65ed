from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from xstrace.calibration import (
    CalibrationProfile,
    IncompleteLadderError,
    RunSummary,
    UnpairedApiError,
    build_profile,
    delta_calibrate,
    diff_of_avg_calibrate,
)
from xstrace.synth import generate_calibration_ladder, preset_exact


def test_delta_calibrate_worked_example():
    # 30 us of extra runtime across 3 interception sites: 10 us each.
    assert delta_calibrate(130_000, 100_000, 3) == Fraction(10_000)


def test_delta_calibrate_zero_delta():
    assert delta_calibrate(100_000, 100_000, 5) == 0


def test_delta_calibrate_negative_clamps_with_warning():
    warnings = []
    assert delta_calibrate(90, 100, 2, warnings) == 0
    assert warnings


def test_delta_calibrate_rejects_zero_sites():
    with pytest.raises(ValueError):
        delta_calibrate(10, 5, 0)


@given(base=st.integers(0, 10**12), mu=st.integers(0, 10**6), n=st.integers(1, 10**4))
@settings(max_examples=100)
def test_delta_calibrate_recovers_injected_mean(base, mu, n):
    assert delta_calibrate(base + n * mu, base, n) == mu


def test_diff_of_avg_worked_figures():
    # Enabled launches average 9.5 us vs 6.5 us disabled; memcpys 5.5 vs 4.5.
    result = diff_of_avg_calibrate(
        {"launch": [10_000, 9_000], "memcpy": [5_000, 6_000]},
        {"launch": [7_000, 6_000], "memcpy": [4_000, 5_000]},
    )
    assert result == {"launch": Fraction(3_000), "memcpy": Fraction(1_000)}


def test_diff_of_avg_identical_sides_zero():
    assert diff_of_avg_calibrate({"x": [5, 7]}, {"x": [5, 7]}) == {"x": 0}


def test_diff_of_avg_unpaired_api_listed():
    with pytest.raises(UnpairedApiError) as exc:
        diff_of_avg_calibrate({"launch": [1], "sync": [2]}, {"launch": [1]})
    assert "sync" in str(exc.value)


def test_diff_of_avg_empty_side_is_unpaired():
    with pytest.raises(UnpairedApiError):
        diff_of_avg_calibrate({"launch": [1]}, {"launch": []})


@given(
    samples=st.lists(st.integers(0, 10**9), min_size=1, max_size=20),
    others=st.lists(st.integers(0, 10**9), min_size=1, max_size=20),
    shift=st.integers(0, 10**9),
)
@settings(max_examples=100)
def test_diff_of_avg_location_invariant(samples, others, shift):
    base = diff_of_avg_calibrate({"a": samples}, {"a": others})
    shifted = diff_of_avg_calibrate(
        {"a": [s + shift for s in samples]}, {"a": [o + shift for o in others]}
    )
    assert base == shifted


def test_ladder_recovers_constants_exactly():
    spec = preset_exact(seed=4, iterations=4)
    profile = build_profile(generate_calibration_ladder(spec).values())
    assert profile.annotation_ns == 4_000
    assert profile.transition_ns == 1_000
    assert profile.api_interception_ns == 1_500
    assert profile.api_internal_ns == {"launch": Fraction(3_000), "memcpy": Fraction(1_000)}


def test_missing_leg_named_in_error():
    ladder = generate_calibration_ladder(preset_exact(seed=4, iterations=2))
    del ladder["interception"]
    with pytest.raises(IncompleteLadderError) as exc:
        build_profile(ladder.values())
    assert "interception" in str(exc.value)


def test_zero_overhead_ladder_gives_zero_profile():
    spec = preset_exact(seed=4, iterations=2)
    zeroed = type(spec)(
        seed=spec.seed,
        iterations=spec.iterations,
        phases=spec.phases,
        durations=spec.durations,
        overheads={k: type(d).constant(0) for k, d in spec.overheads.items()},
        api_internal={k: type(d).constant(0) for k, d in spec.api_internal.items()},
        kernel_prob=spec.kernel_prob,
        processes=spec.processes,
        name="zero",
    )
    profile = build_profile(generate_calibration_ladder(zeroed).values())
    assert profile.is_zero()


def test_repeated_legs_average():
    ladder = generate_calibration_ladder(preset_exact(seed=4, iterations=3))
    doubled = list(ladder.values()) + [ladder["off"], ladder["internal"]]
    profile = build_profile(doubled)
    assert profile.annotation_ns == 4_000


def test_profile_text_roundtrip_exact():
    profile = CalibrationProfile(
        annotation_ns=Fraction(4_000),
        transition_ns=Fraction(10_001, 3),
        api_interception_ns=Fraction(0),
        api_internal_ns={"launch": Fraction(3_000), "memcpy": Fraction(1, 2)},
        provenance=("note one", "note two"),
    )
    back = CalibrationProfile.from_text(profile.to_text())
    assert back.annotation_ns == profile.annotation_ns
    assert back.transition_ns == profile.transition_ns
    assert back.api_internal_ns == profile.api_internal_ns
    assert back.provenance == profile.provenance


def test_profile_rejects_bad_header():
    with pytest.raises(ValueError):
        CalibrationProfile.from_text("something else\nannotation = 1\n")


def test_profile_is_deterministic():
    spec = preset_exact(seed=4, iterations=3)
    a = build_profile(generate_calibration_ladder(spec).values()).to_text()
    b = build_profile(generate_calibration_ladder(spec).values()).to_text()
    assert a == b


def test_run_summary_json_roundtrip():
    summary = RunSummary("off", 123, 4, 5, 6, {"launch": (1, 2, 3)}, "run-1")
    assert RunSummary.from_json(summary.to_json()) == summary


def test_workload_without_api_sites_calibrates_to_zero():
    # All-simulator workload: the interception legs have nothing to measure,
    # so the profile records zero for them instead of failing the ladder.
    from xstrace.model import Category
    from xstrace.synth import Dist, PhaseSpec, WorkloadSpec, generate_workload
    from xstrace.correction import correct_trace
    from xstrace.model import traces_equal

    spec = WorkloadSpec(
        seed=5,
        iterations=3,
        phases=(PhaseSpec("simulation", Category.SIMULATOR, calls=4),),
        durations={
            "glue": Dist.constant(1_000),
            "backend": Dist.constant(30_000),
            "simulator": Dist.constant(80_000),
            "api": Dist.constant(10_000),
            "api_gap": Dist.constant(2_000),
            "kernel": Dist.constant(20_000),
            "launch_delay": Dist.constant(500),
        },
        overheads={
            "annotation": Dist.constant(4_000),
            "transition": Dist.constant(1_000),
            "api_interception": Dist.constant(1_500),
        },
        api_internal={"launch": Dist.constant(3_000)},
        kernel_prob=0.0,
        name="sim_only",
    )
    profile = build_profile(generate_calibration_ladder(spec).values())
    assert profile.api_interception_ns == 0
    assert any("no api_interception sites" in w for w in profile.provenance)
    uninstrumented, instrumented, _ = generate_workload(spec)
    corrected, _ = correct_trace(instrumented, profile)
    assert traces_equal(corrected, uninstrumented)
