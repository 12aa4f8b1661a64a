import sys
from pathlib import Path

import pytest

from dtplan.abstraction import build_heuristic
from dtplan.core import ground
from dtplan.lang import load_domain
from dtplan.solvers import policy_iteration

FIXTURES = Path(__file__).parent / "fixtures"
HARDEST = ("Office", "Rain", "!Umbrella", "!Wet", "!HRC", "!HUC", "!HRS", "!HUS")


class Bundle:
    """A bundled domain with its ground model, HUC heuristic and exact solution."""

    def __init__(self, name):
        self.domain = load_domain(name)
        self.mdp = ground(self.domain)
        self.policy, self.values, self.report = policy_iteration(self.mdp)
        self._h = None

    @property
    def h(self):
        if self._h is None:
            self._h = build_heuristic(self.domain, ["HUC"])
        return self._h


@pytest.fixture(scope="session")
def base():
    return Bundle("coffee-base")


@pytest.fixture(scope="session")
def extended():
    return Bundle("coffee-extended")


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(module.RESULTS):
        terminalreporter.write_line(module.RESULTS[number].line())
