import sys
import warnings

import pytest

from zics import corpus


@pytest.fixture(scope="session")
def wilhelm():
    return corpus.load("wilhelm")[0]


@pytest.fixture(scope="session")
def birth_death():
    return corpus.load("birth_death")[0]


@pytest.fixture(scope="session")
def mm_closed():
    return corpus.load_file("michaelis_menten_closed.json")


@pytest.fixture(autouse=True)
def _quiet_solver_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
