import os

import pytest

from fraclog.core import build_grid, canonical_problem
from fraclog.fracop import assemble_operator

# the hypothesis runs share one process; keep example counts modest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def problem():
    return canonical_problem()


@pytest.fixture(scope="session")
def op1024(problem):
    return assemble_operator(build_grid(problem, 1024), problem.alpha)


@pytest.fixture(scope="session")
def op256(problem):
    return assemble_operator(build_grid(problem, 256), problem.alpha)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
