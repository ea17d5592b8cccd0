import numpy as np
import pytest

from zubovroa import expr as ex
from zubovroa.dynamics import SystemDef, builtin
from zubovroa.expr import ExprGraph
from zubovroa.intervals import Box


def scalar_system(build, radius=2.0, dt=1.0, name="scalar"):
    (x,) = ex.variables(1)
    return SystemDef((ExprGraph(build(x), 1),), dt, Box([-radius], [radius]), name=name)


def linear_system(A, radius=3.0):
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    xs = ex.variables(n)
    comps = []
    for i in range(n):
        node = ex.const(0.0)
        for j in range(n):
            node = node + float(A[i, j]) * xs[j]
        comps.append(ExprGraph(node, n))
    return SystemDef(tuple(comps), 1.0, Box.symmetric([radius] * n), name="linear")


@pytest.fixture(scope="session")
def vdp():
    return builtin("vdp")


@pytest.fixture(scope="session")
def tm():
    return builtin("two_machine")


@pytest.fixture(scope="session")
def p4():
    return builtin("power4d")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
