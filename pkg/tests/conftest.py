import numpy as np
import pytest
from hypothesis import settings

from hjinverse.action import ActionParams, FreeStart, minimize_action
from hjinverse.forcing import default_periodic
from hjinverse.laxoleinik import GridFunction, SpatialGrid
from hjinverse.wiener import TimeGrid, sample_prior

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Trigger numba compilation once so timed tests measure steady-state cost."""
    grid = SpatialGrid(True, 16)
    W = sample_prior(TimeGrid.from_dt(0.0, 1.0, 0.1), 0)
    p = ActionParams(default_periodic(), W)
    psi = GridFunction(grid, np.zeros(16), 0.0)
    minimize_action(0.3, (0.0, 1.0), p, FreeStart(psi))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config.acceptance = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    number, title = mark.args
    details = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    status = "PASS" if rep.passed else "FAIL"
    item.config.acceptance[number] = (
        f"criterion {number:>2} {status}  {title} ({rep.duration:.1f} s)"
        + (f": {details}" if details else ""))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance", {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        terminalreporter.write_line(lines[number])
