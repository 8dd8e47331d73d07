import random

import pytest

from picsearch import he


@pytest.fixture(scope="session")
def params128():
    return he.gen_params(128, 2, random.Random(1))


@pytest.fixture(scope="session")
def params64():
    return he.gen_params(64, 2, random.Random(2))


@pytest.fixture
def rng():
    return random.Random(12345)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    from test_acceptance import TITLES

    outcome = {}
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid:
                continue
            num = int(nodeid.split("test_criterion_")[1].split("_")[0])
            if status != "passed" or rep.when == "call":
                outcome[num] = "PASS" if status == "passed" and outcome.get(num) != "FAIL" else "FAIL"
    if not outcome:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(outcome):
        terminalreporter.write_line(f"criterion {num}: {outcome[num]}  {TITLES[num]}")
