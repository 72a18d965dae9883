import numpy as np
import pytest


def pytest_addoption(parser):
    parser.addoption("--fast-acceptance", action="store_true", default=False,
                     help="run acceptance criteria at reduced budgets (not their stated settings)")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


_VERDICTS = []


@pytest.fixture
def verdict():
    """Record one acceptance verdict line; all are repeated in the terminal summary."""
    return _VERDICTS.append


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split("criterion ")[1].split()[0])):
            terminalreporter.write_line(line)
