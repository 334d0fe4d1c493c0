import os
import sys
import warnings

import pytest
from hypothesis import HealthCheck, settings

from trajsynth.geodata import Extent, synth_map

warnings.filterwarnings("ignore", message=".*TBB.*")

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def small_extent():
    return Extent(side=640.0, cell_size=10.0)


@pytest.fixture(scope="session")
def small_map(small_extent):
    return synth_map(0, small_extent)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
