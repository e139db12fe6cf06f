from pathlib import Path

import numpy as np
import pytest

from facts import autodiff as ad
from facts.data import synthetic_ar_mixture, write_csv

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def f64():
    with ad.precision(64):
        yield


@pytest.fixture
def f32():
    with ad.precision(32):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def synthetic_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "synthetic.csv"
    write_csv(path, synthetic_ar_mixture(2000, 8, seed=42))
    return path


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL/SKIP line for the acceptance summary."""

    def record(number, passed, detail):
        status = passed if isinstance(passed, str) else ("PASS" if passed else "FAIL")
        ACCEPTANCE_LINES.append(f"criterion {number}: {status}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: s.split(":")[0].split()[1]):
            terminalreporter.write_line(line)
