import numpy as np
import pytest

from inverse_attack.harness.scenarios import SuiteConfig, suite_scenarios
from inverse_attack.scene import SceneSim


@pytest.fixture(scope="session")
def scenes():
    """A handful of generated scenes shared by the slower tests."""
    return suite_scenarios(SuiteConfig(n_scenes=6, seed=11, repeats=1))


@pytest.fixture(scope="session")
def sim(scenes):
    return SceneSim(scenes[0])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    def record(criterion: int, name: str, passed: bool, detail: str) -> None:
        line = f"criterion {criterion} [{'PASS' if passed else 'FAIL'}] {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
