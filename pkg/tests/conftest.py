import pytest

from incompfit import _kernels as K
from incompfit.datasets import load_growth, load_spo, trim_growth


@pytest.fixture(scope="session")
def growth():
    return load_growth()


@pytest.fixture(scope="session")
def trimmed(growth):
    return trim_growth(growth)


@pytest.fixture(scope="session")
def spo():
    return load_spo()


@pytest.fixture(params=K.available_backends())
def backend(request):
    prev = K.BACKEND
    K.use_backend(request.param)
    yield request.param
    K.use_backend(prev)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
