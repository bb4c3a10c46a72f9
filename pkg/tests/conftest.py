import numpy as np
import pytest

from pathfuse.camera import BevProjector, make_fisheye
from pathfuse.costmap import GridSpec
from pathfuse.paths import SamplerSpec, sample_paths


@pytest.fixture(scope="session")
def camera():
    return make_fisheye(240.0, 319.5, 239.5, -0.5, 1.0, (640, 480))


@pytest.fixture(scope="session")
def small_camera():
    # 80x60 fisheye: same field of view at an eighth of the resolution.
    return make_fisheye(30.0, 39.5, 29.5, -0.5, 1.0, (80, 60))


@pytest.fixture(scope="session")
def grid():
    return GridSpec()


@pytest.fixture(scope="session")
def projector(camera, grid):
    return BevProjector(camera, grid)


@pytest.fixture(scope="session")
def pathset():
    return sample_paths(SamplerSpec(), 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record a one-line verdict for an acceptance criterion."""

    def record(number, passed, detail):
        _ACCEPTANCE[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})"
        print(_ACCEPTANCE[number])

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
