import math

import numpy as np
import pytest

from zubovroa import expr as ex
from zubovroa.expr import ExprGraph, ExprParseError, interval_eval, parse_prefix
from zubovroa.intervals import Box


def random_node(rng, n, depth):
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.6:
            return ex.var(int(rng.integers(n)))
        return ex.const(float(np.round(rng.normal(), 3)))
    op = rng.choice(["add", "sub", "mul", "neg", "sin", "cos", "exp", "square", "relu"])
    if op in ("add", "sub", "mul"):
        a, b = random_node(rng, n, depth - 1), random_node(rng, n, depth - 1)
        return {"add": ex.add, "sub": ex.sub, "mul": ex.mul}[op](a, b)
    a = random_node(rng, n, depth - 1)
    if op == "exp":
        # keep magnitudes moderate
        a = ex.mul(0.3, ex.sin(a))
    return getattr(ex, op)(a)


def test_point_evaluation_and_batching():
    x = ex.variables(2)
    g = ExprGraph(x[0] - 0.1 * x[1], 2)
    assert g([1.0, 1.0]) == pytest.approx(0.9)
    out = g(np.array([[1.0, 1.0], [0.0, 2.0]]))
    assert out.shape == (2,)
    assert np.allclose(out, [0.9, -0.2])


def test_constant_folding():
    x = ex.variables(1)[0]
    assert (0 * x).is_const
    assert (x * 1) is x
    assert ex.add(ex.const(2.0), ex.const(3.0)).value == 5.0


def test_variable_index_checked():
    with pytest.raises(ValueError):
        ExprGraph(ex.var(3), 2)


def test_square_interval_contains_hull():
    (x,) = ex.variables(1)
    iv = interval_eval(ExprGraph(x ** 2, 1), Box([-2.0], [3.0]))
    assert iv.lo <= 0 and iv.hi >= 9


def test_sin_interval():
    (x,) = ex.variables(1)
    iv = interval_eval(ExprGraph(ex.sin(x), 1), Box([0.0], [math.pi]))
    assert iv.lo <= 0 and iv.hi >= 1


def test_point_box_contains_point_value(rng):
    for _ in range(1000):
        n = int(rng.integers(1, 4))
        g = ExprGraph(random_node(rng, n, 4), n)
        x = rng.uniform(-2, 2, n)
        iv = interval_eval(g, Box.point(x))
        assert iv.lo <= g(x) <= iv.hi


def test_interval_inclusion_soundness(rng):
    # 10^4 (graph, box, point) triples: 500 graphs, 20 boxes each, batched
    for _ in range(500):
        n = int(rng.integers(1, 4))
        g = ExprGraph(random_node(rng, n, 4), n)
        c = rng.uniform(-2, 2, (20, n))
        r = rng.uniform(0, 1, (20, n))
        lo, hi = c - r, c + r
        blo, bhi = g.bounds(lo, hi)
        pts = lo + rng.random((20, n)) * (hi - lo)
        v = g(pts)
        assert np.all((blo <= v) & (v <= bhi))


def test_derivatives_match_finite_differences(rng):
    for _ in range(200):
        n = int(rng.integers(1, 4))
        node = random_node(rng, n, 4)
        if ExprGraph(node, n).contains_op("relu"):
            continue
        g = ExprGraph(node, n)
        x = rng.uniform(-1.5, 1.5, n)
        for j in range(n):
            h = 1e-6
            e = np.zeros(n)
            e[j] = h
            fd = (g(x + e) - g(x - e)) / (2 * h)
            assert g.diff(j)(x) == pytest.approx(fd, rel=1e-5, abs=1e-6)


def test_relu_derivative_refused():
    (x,) = ex.variables(1)
    with pytest.raises(ValueError):
        ExprGraph(ex.relu(x), 1).diff(0)
    # constant argument is fine
    assert ExprGraph(ex.relu(ex.const(2.0)) * x, 1).diff(0)(0.0) == 2.0


def test_prefix_round_trip(rng):
    for _ in range(200):
        n = int(rng.integers(1, 4))
        g = ExprGraph(random_node(rng, n, 4), n)
        h = parse_prefix(g.to_prefix(), n)
        x = rng.uniform(-2, 2, (5, n))
        assert np.array_equal(np.asarray(g(x)), np.asarray(h(x)))


def test_parse_forms():
    g = parse_prefix("(add x1 (mul 2 x2) pi)", 2)
    assert g([1.0, 1.0]) == pytest.approx(3 + math.pi)
    m = parse_prefix("(max x1 x2)", 2)
    assert m([1.0, 3.0]) == 3.0 and m([4.0, 3.0]) == 4.0


@pytest.mark.parametrize("text,pos", [("(add x1", 0), ("(foo x1 x2)", 0), ("(sin x1 x2)", 0),
                                      ("(add x1 x2))", 11), ("(add x1 $)", 8)])
def test_parse_errors_report_position(text, pos):
    with pytest.raises(ExprParseError) as err:
        parse_prefix(text, 2)
    assert err.value.position == pos
