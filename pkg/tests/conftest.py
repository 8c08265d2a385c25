import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

# possibility vector and prediction shared by several worked-instance tests
PI3 = np.array([1.0, 0.51, 0.50])
Q3 = np.array([0.48, 0.261, 0.259])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria append (name, passed, detail) here; printed after the run
ACCEPTANCE_LINES: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
