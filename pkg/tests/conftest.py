import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def line_data():
    """Noise-free points on a smooth curve in the plane."""
    t = np.linspace(0.0, 1.0, 200)
    return np.column_stack([t, 0.3 * np.sin(2.0 * t)]), t


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Record ``(criterion, passed, detail)``; summarized after the run."""
    return request.config.stash[_ACCEPTANCE]


def pytest_terminal_summary(terminalreporter, config):
    log = config.stash.get(_ACCEPTANCE, [])
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in sorted(log, key=lambda r: int(r[0][2:])):
        terminalreporter.write_line(f"{name} {'PASS' if passed else 'FAIL'}: {detail}")
