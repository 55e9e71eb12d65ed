import pytest

from xstrace.model import Category
from xstrace.overlap import count_transitions
from xstrace.traceio import read_trace

from test_session import make_session


class StubSimulator:
    gravity = 9.81

    def __init__(self):
        self.steps = 0

    def step(self, action):
        self.steps += 1
        return ("obs", action)

    def reset(self):
        return "initial"

    def explode(self):
        raise ValueError("kaboom")


def test_wrapped_calls_record_events_and_transitions(tmp_path):
    session = make_session(tmp_path)
    sim = session.wrap_library(StubSimulator(), "simulator")
    for i in range(42):
        assert sim.step(i) == ("obs", i)
    session.close()
    trace = read_trace(tmp_path / "trace")
    sim_events = [e for e in trace.events if e.category == Category.SIMULATOR]
    assert len(sim_events) == 42
    assert {e.name for e in sim_events} == {"step"}
    counts = count_transitions(trace)
    assert counts.get(Category.HIGH_LEVEL, Category.SIMULATOR) == 42
    assert session.counters.transitions == {"simulator": 42}
    assert session.counters.calls == {"simulator": 42}


def test_return_values_and_state_pass_through(tmp_path):
    session = make_session(tmp_path)
    target = StubSimulator()
    sim = session.wrap_library(target, "simulator")
    sim.step("a")
    assert target.steps == 1
    assert sim.reset() == "initial"
    session.close()


def test_exception_propagates_and_event_closes(tmp_path):
    session = make_session(tmp_path)
    sim = session.wrap_library(StubSimulator(), "simulator")
    with pytest.raises(ValueError, match="kaboom"):
        sim.explode()
    session.close()
    trace = read_trace(tmp_path / "trace")
    names = [e.name for e in trace.events if e.category == Category.SIMULATOR]
    assert names == ["explode"]


def test_zero_calls_zero_events(tmp_path):
    session = make_session(tmp_path)
    session.wrap_library(StubSimulator(), "simulator")
    with session.operation("idle"):
        pass
    session.close()
    trace = read_trace(tmp_path / "trace")
    assert [e for e in trace.events if e.category == Category.SIMULATOR] == []
    assert session.counters.calls == {}


def test_non_callable_attributes_unwrapped(tmp_path):
    session = make_session(tmp_path)
    sim = session.wrap_library(StubSimulator(), "simulator")
    assert sim.gravity == 9.81
    session.close()


def test_backend_level_and_module_like_targets(tmp_path):
    import math

    session = make_session(tmp_path)
    backend = session.wrap_library(math, "backend")
    assert backend.sqrt(9.0) == 3.0
    session.close()
    trace = read_trace(tmp_path / "trace")
    events = [e for e in trace.events if e.category == Category.BACKEND]
    assert [e.name for e in events] == ["sqrt"]
    assert count_transitions(trace).get(Category.HIGH_LEVEL, Category.BACKEND) == 1


def test_reentrant_wrapped_calls_count_one_transition(tmp_path):
    session = make_session(tmp_path)

    class Recursive:
        def __init__(self):
            self.proxy = None

        def outer(self):
            return self.proxy.inner()

        def inner(self):
            return "deep"

    target = Recursive()
    proxy = session.wrap_library(target, "backend")
    target.proxy = proxy
    assert proxy.outer() == "deep"
    session.close()
    trace = read_trace(tmp_path / "trace")
    backend_events = [e for e in trace.events if e.category == Category.BACKEND]
    assert len(backend_events) == 2  # both calls recorded
    # but only the outermost counts as a transition, matching the analyzer
    assert session.counters.transitions == {"backend": 1}
    assert count_transitions(trace).get(Category.HIGH_LEVEL, Category.BACKEND) == 1


def test_bad_level_rejected(tmp_path):
    session = make_session(tmp_path)
    with pytest.raises(ValueError):
        session.wrap_library(StubSimulator(), "gpu")
    session.close()
