import numpy as np
import pytest

from evlstm.events import EventStream, SensorGeometry


@pytest.fixture
def geom():
    return SensorGeometry(64, 64)


def random_stream(rng, geometry, n, t_max=1_000_000, labeled=False):
    t = rng.integers(0, t_max, n)
    x = rng.integers(0, geometry.width, n)
    y = rng.integers(0, geometry.height, n)
    p = rng.choice([-1, 1], n)
    label = rng.integers(1, 3, n) if labeled else None
    return EventStream(geometry, t, x, y, p, label).sorted()


@pytest.fixture
def make_stream():
    return random_stream


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
