import numpy as np
import pytest

from coordsim.graph import build_topology
from coordsim.objective import builtin_objective

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record_criterion():
    def record(number: int, passed: bool, detail: str):
        ACCEPTANCE[number] = (bool(passed), detail)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def line3():
    net = build_topology("line", 3)
    return net, builtin_objective("line-example", net)


@pytest.fixture
def star5():
    net = build_topology("star", 5)
    return net, builtin_objective("C1", net)


@pytest.fixture
def comp4():
    net = build_topology("complete", 4)
    return net, builtin_objective("C1", net)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
