import json
from pathlib import Path

import numpy as np
import pytest

from pacecore import instances
from pacecore.equilibrium import solve_pacing
from pacecore.reduction import LEDGER_TALLY

FROZEN = json.loads((Path(__file__).parent / "oracles" / "frozen.json").read_text())

_SOLVED: dict = {}


def solved(name: str):
    """Instance and pacing profile shared by every test that needs them."""
    if name not in _SOLVED:
        if name == "uniform":
            inst, kind = instances.uniform_single_agent(), "moulin"
        elif name == "pair-moulin":
            inst, kind = instances.symmetric_pair(), "moulin"
        elif name == "pair-proportional":
            inst, kind = instances.symmetric_pair(), "proportional"
        elif name == "correlated":
            inst, kind = instances.correlated_pair(), "proportional"
        elif name.startswith("lower-"):
            n = int(name.split("-")[1])
            inst, kind = instances.make_lower_bound(instances.LowerBoundSpec(n)), "moulin"
        else:
            raise KeyError(name)
        _SOLVED[name] = (inst, kind, solve_pacing(inst, kind))
    return _SOLVED[name]


@pytest.fixture
def frozen():
    return FROZEN


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, label): acceptance criterion checked by the test")
    config.addinivalue_line("markers", "last: run after every other test")


def pytest_collection_modifyitems(session, config, items):
    # the ledger criterion summarizes every simulation, so it goes last
    items.sort(key=lambda item: item.get_closest_marker("last") is not None)


_CRITERIA: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, label = mark.args
    failed = rep.failed or (rep.when == "call" and rep.skipped)
    if rep.when == "call" or failed:
        prev = _CRITERIA.get(number, (label, True))
        _CRITERIA[number] = (label, prev[1] and not failed)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        label, ok = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {label}")


def pytest_sessionfinish(session, exitstatus):
    # every simulation in the run went through the inline ledger check
    if LEDGER_TALLY["violations"]:
        session.exitstatus = 1
