import re
import warnings

import numpy as np
import pytest

from ddmpc.lti import four_tank, steady_state
from ddmpc.mpc import PersistenceWarning

ACCEPTANCE_RESULTS = {}


@pytest.fixture(autouse=True)
def _quiet_pe_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PersistenceWarning)
        yield


@pytest.fixture(scope="session")
def tank():
    return four_tank()


@pytest.fixture(scope="session")
def tank_eq(tank):
    return steady_state(tank, [1.0, 1.0])


@pytest.fixture
def rng():
    return np.random.default_rng(20201015)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    def order(key):
        num, tag = re.match(r"(\d+)(\w*)", key).groups()
        return int(num), tag

    for key in sorted(ACCEPTANCE_RESULTS, key=order):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")
