import json
import sys
from importlib import resources
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from levelcover import FleetConfig, Polygon, Scenario, build_packing, run  # noqa: E402

ACCEPTANCE_LINES = []


def uh_scenario_dict():
    return json.loads(resources.files("levelcover").joinpath("data/uh.json").read_text())


@pytest.fixture(scope="session")
def uh_dict():
    return uh_scenario_dict()


@pytest.fixture(scope="session")
def uh_scenario(uh_dict):
    return Scenario.from_dict(uh_dict)


@pytest.fixture(scope="session")
def uh_polygon(uh_scenario):
    return uh_scenario.polygon


@pytest.fixture(scope="session")
def config():
    return FleetConfig()


@pytest.fixture(scope="session")
def uh_packing(uh_polygon, config):
    return build_packing(uh_polygon, config)


@pytest.fixture(scope="session")
def uh_run(uh_scenario):
    import time

    t0 = time.perf_counter()
    res = run(uh_scenario)
    return res, time.perf_counter() - t0


@pytest.fixture
def square_polygon():
    return Polygon.from_xy([0, 600, 600, 0], [0, 0, 600, 600])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
