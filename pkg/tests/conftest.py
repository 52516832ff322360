import json
import os
import sys

import pytest

HERE = os.path.dirname(__file__)
sys.path.insert(0, os.path.join(HERE, "oracles"))

# criterion number -> (title, outcome); filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_addoption(parser):
    parser.addoption("--compas-csv", default=os.environ.get("COMPAS_CSV"),
                     help="ProPublica violent-recidivism CSV for the COMPAS acceptance path")


@pytest.fixture(scope="session")
def frozen():
    with open(os.path.join(HERE, "oracles", "frozen.json")) as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def compas_csv(request):
    path = request.config.getoption("--compas-csv")
    if not path:
        default = os.path.join(HERE, "data", "compas-scores-two-years-violent.csv")
        path = default if os.path.exists(default) else None
    return path


def pytest_runtest_makereport(item, call):
    crit = getattr(item.function, "acceptance_criterion", None)
    if crit is None or call.when != "call" and not (call.when == "setup" and call.excinfo is not None):
        return
    title = item.function.acceptance_title
    if call.excinfo is None:
        ACCEPTANCE[crit] = (title, "PASS")
    elif call.excinfo.errisinstance(pytest.skip.Exception):
        ACCEPTANCE[crit] = (title, f"SKIP ({call.excinfo.value})")
    else:
        ACCEPTANCE[crit] = (title, "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        title, outcome = ACCEPTANCE[crit]
        terminalreporter.write_line(f"criterion {crit}: {outcome:<5} {title}")
