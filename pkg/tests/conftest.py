import pytest

from hearth.cli import resolve_scenario_path
from hearth.home import HomeSimulation, Scenario
from hearth.persistence import EventLog

BUNDLED = ["demo-home", "fire-demo", "attacks-demo", "uptime-demo", "thermostat-day"]

# one PASS/FAIL line per acceptance test, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def run_scenario(name, **overrides):
    scenario = Scenario.load(resolve_scenario_path(name), **overrides)
    sim = HomeSimulation(scenario, EventLog())
    sim.typecheck()
    snapshot = sim.run()
    return sim, snapshot


@pytest.fixture(scope="session")
def bundled_runs():
    """One run of every bundled scenario, shared across the session."""
    return {name: run_scenario(name) for name in BUNDLED}
