import numpy as np
import pytest

from nullrec.models import get_model


@pytest.fixture(scope="session")
def gaussian_longtime():
    return get_model("gaussian_longtime")


@pytest.fixture(scope="session")
def tanh_model():
    return get_model("tanh_interface")


def pytest_configure(config):
    np.seterr(over="raise")


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one verdict line per exit criterion for the terminal summary."""
    def log(number, title, ok, detail):
        line = f"CRITERION {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return log


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
