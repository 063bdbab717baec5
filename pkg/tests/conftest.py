import pytest

from heisenberg_mf.measures import WeightedMeasure
from heisenberg_mf.experiments import SolveCache

ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(scope="session")
def record():
    def _record(number: int, title: str, ok: bool, detail: str = ""):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}  {detail}".rstrip()
        ACCEPTANCE_LINES[number] = line
        print(line)
    return _record


@pytest.fixture(scope="session")
def default_base():
    return WeightedMeasure.from_presets("unit", "paraboloid")


@pytest.fixture(scope="session")
def normal_base():
    return WeightedMeasure.from_presets("gauge_gaussian", "zero")


@pytest.fixture(scope="session")
def solve_cache():
    return SolveCache()
