import numpy as np
import pytest

from tubecert import _kernels

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=_kernels.available_backends())
def kernel_backend(request):
    prev = _kernels.use_backend(request.param)
    yield request.param
    _kernels.use_backend(prev)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
