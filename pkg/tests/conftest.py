import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mcbf import backend

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=400)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

BACKENDS = ["python"] + (["compiled"] if backend.compiled_available() else [])


@pytest.fixture(params=BACKENDS)
def kernel_backend(request):
    """Run a test once per available kernel backend."""
    previous = backend.set_backend(request.param)
    yield request.param
    backend.set_backend(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.report().splitlines():
        terminalreporter.write_line(line)
