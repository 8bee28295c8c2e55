import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from trajaware import _kernels
from trajaware.learner import LearnConfig, fit_normality
from trajaware.simulator import default_specs, generate


@pytest.fixture(params=_kernels.available_backends())
def backend(request):
    """Run a test once per available kernel backend."""
    before = _kernels.backend
    _kernels.use_backend(request.param)
    yield request.param
    _kernels.use_backend(before)


@pytest.fixture(scope="session")
def perimeter_bank():
    """Bank learned from one default perimeter run (seed 1001)."""
    obs, _ = generate(default_specs(1001)["perimeter"])
    return fit_normality(obs, LearnConfig())


@pytest.fixture(scope="session")
def perimeter_test():
    return generate(replace(default_specs(7)["perimeter"], laps=1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = []


@pytest.fixture
def verdict():
    """Record one pass/fail line for an acceptance criterion."""
    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
