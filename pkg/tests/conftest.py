import random

import pytest

from xstrace.model import Category, Event, ProcessMeta, Trace


@pytest.fixture
def two_event_trace() -> Trace:
    events = [
        Event(1, 0, Category.HIGH_LEVEL, "script", 0, 100),
        Event(1, 0, Category.BACKEND, "step_backend", 10, 50),
    ]
    return Trace(1, events, [ProcessMeta(1, "main")])


def make_rng(seed: int) -> random.Random:
    return random.Random(seed)
