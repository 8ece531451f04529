import pytest

from repulsion_guidance.integrator import simulate
from repulsion_guidance.model import Scenario


@pytest.fixture(scope="session")
def paper():
    return Scenario.paper()


@pytest.fixture(scope="session")
def pursuit_run(paper):
    return simulate(paper, 0)


@pytest.fixture(scope="session")
def circumvention_run(paper):
    return simulate(paper, 1)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        ok, detail = mod.RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}")
