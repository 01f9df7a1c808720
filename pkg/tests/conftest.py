import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from cubeval.camera import Intrinsics
from cubeval.geometry import Cuboid
from cubeval.synthetic import random_rotation

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA = Path(__file__).parent / "data"

finite = st.floats(-1e3, 1e3, allow_nan=False)
positive_dim = st.floats(0.1, 5.0)


@st.composite
def rotations(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_rotation(np.random.default_rng(seed))


@st.composite
def cuboids(draw, center_scale=2.0):
    center = draw(st.tuples(*[st.floats(-center_scale, center_scale)] * 3))
    dims = draw(st.tuples(positive_dim, positive_dim, positive_dim))
    return Cuboid(center, dims, draw(rotations()))


@st.composite
def intrinsics(draw):
    f = draw(st.floats(100.0, 3000.0))
    aspect = draw(st.floats(0.8, 1.25))
    H = draw(st.floats(200.0, 2000.0))
    W = draw(st.floats(200.0, 3000.0))
    return Intrinsics(f, f * aspect, draw(st.floats(0.0, W)), draw(st.floats(0.0, H)), H, W)


@pytest.fixture
def data_dir():
    return DATA


# Acceptance verdicts, echoed at the end of the run so they survive output capture.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
