import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mwiab.scenario import load_scenario
from mwiab.sim import build_demand
from mwiab.traffic import load_trace

settings.register_profile("repo", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))


@pytest.fixture(scope="session")
def bundled():
    return load_scenario("rural_montreal")


@pytest.fixture(scope="session")
def bundled_trace():
    return load_trace("bundled")


@pytest.fixture(scope="session")
def demand_by_seed(bundled, bundled_trace):
    cache = {}

    def get(seed):
        if seed not in cache:
            cache[seed] = build_demand(bundled, bundled_trace, seed)
        return cache[seed]
    return get


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
