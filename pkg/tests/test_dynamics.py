import numpy as np
import pytest

from zubovroa import expr as ex
from zubovroa.dynamics import (DynamicsError, SystemDef, builtin, certify_below, format_system,
                               hessian_eta_bound, image_bounds, jacobian_at, load_system,
                               parse_system, step, trajectory)
from zubovroa.expr import ExprGraph
from zubovroa.intervals import Box

from conftest import linear_system, scalar_system


def test_vdp_step_and_trajectory(vdp):
    assert np.allclose(step(vdp, [1.0, 1.0]), [0.9, 1.1])
    tr = trajectory(vdp, [1.0, 1.0], 2)
    assert not tr.diverged
    # second iterate by hand: x2 = 1.1 + 0.1 (0.9 + (0.81 - 1) 1.1)
    assert np.allclose(tr.states, [[1, 1], [0.9, 1.1], [0.79, 1.1691]])


def test_origin_trajectory_is_constant(vdp, tm, p4):
    for s in (vdp, tm, p4):
        tr = trajectory(s, np.zeros(s.n), 5)
        assert tr.states.shape == (6, s.n) and np.all(tr.states == 0)


def test_doubling_map_escapes_at_step_seven():
    s = scalar_system(lambda x: 2.0 * x)
    tr = trajectory(s, [1.0], 10, escape=100.0)
    assert tr.diverged and tr.diverged_at == 7
    assert tr.states[-1][0] == 128.0


def test_non_finite_values_flag_divergence():
    s = scalar_system(lambda x: ex.exp(x) - 1.0)
    tr = trajectory(s, [1.0], 50, escape=np.inf)
    assert tr.diverged


def test_trajectory_is_bit_deterministic(tm):
    a = trajectory(tm, [0.3, -0.2], 200).states
    b = trajectory(tm, [0.3, -0.2], 200).states
    assert np.array_equal(a, b)


def test_batched_step_matches_rows(p4, rng):
    x = rng.uniform(-1, 1, (7, 4))
    batch = step(p4, x)
    rows = np.array([step(p4, r) for r in x])
    assert np.array_equal(batch, rows)


def test_jacobians_at_origin(vdp, tm):
    assert np.allclose(jacobian_at(vdp, [0, 0]), [[1, -0.1], [0.1, 0.9]])
    assert np.allclose(jacobian_at(tm, [0, 0]), [[1, 0.1], [-0.05, 0.95]])


def test_linear_jacobian_is_matrix(rng):
    A = rng.normal(size=(3, 3)) * 0.3
    s = linear_system(A)
    assert np.allclose(jacobian_at(s, rng.normal(size=3)), A)


@pytest.mark.parametrize("name", ["vdp", "two_machine", "power4d"])
def test_jacobian_matches_finite_differences(name, rng):
    s = builtin(name)
    h = 1e-6
    for _ in range(100):
        x = s.domain.sample(rng, 1)[0] * 0.8
        J = jacobian_at(s, x)
        fd = np.empty_like(J)
        for j in range(s.n):
            e = np.zeros(s.n)
            e[j] = h
            fd[:, j] = (step(s, x + e) - step(s, x - e)) / (2 * h)
        assert np.allclose(J, fd, rtol=1e-6, atol=1e-8)


def test_relu_in_dynamics_is_rejected():
    s = scalar_system(lambda x: ex.relu(x) * 0.5)
    with pytest.raises(ValueError):
        jacobian_at(s, [0.0])


def test_origin_must_be_equilibrium():
    with pytest.raises(DynamicsError):
        scalar_system(lambda x: x + 1.0)


def test_hessian_envelope():
    lin = linear_system([[0.5, 0.1], [0.0, 0.4]])
    assert np.all(hessian_eta_bound(lin, Box.symmetric([1, 1])) == 0)
    quad = scalar_system(lambda x: 0.5 * x + ex.square(x))
    assert hessian_eta_bound(quad, Box.symmetric([1.0]))[0] == pytest.approx(2.0)


def test_vdp_hessian_envelope(vdp):
    eta = hessian_eta_bound(vdp, Box.symmetric([1.0, 1.0]))
    assert eta[0] == 0
    # d2f2/dx1^2 = 0.2 x2, d2f2/dx1dx2 = 0.2 x1 (twice): 0.2 + 0.2 + 0.2
    assert eta[1] == pytest.approx(0.6)


def test_hessian_envelope_bounds_remainder(vdp, rng):
    box = Box.symmetric([1.0, 1.0])
    eta = hessian_eta_bound(vdp, box)
    A = jacobian_at(vdp, [0, 0])
    x = box.sample(rng, 2000)
    h = np.abs(step(vdp, x) - x @ A.T)
    assert np.all(h <= 0.5 * np.sum(x * x, axis=1)[:, None] * eta + 1e-15)


def test_image_bounds_enclose_images(tm, rng):
    c = rng.uniform(-0.8, 0.8, (50, 2))
    r = rng.uniform(0, 0.1, (50, 2))
    lo, hi = image_bounds(tm, c - r, c + r)
    pts = c - r + rng.random((50, 2)) * 2 * r
    fx = step(tm, pts)
    assert np.all((lo <= fx) & (fx <= hi))


def test_certify_below(vdp):
    assert certify_below(vdp.safety, Box.symmetric([0.5, 0.5]), 1.0)
    assert not certify_below(vdp.safety, Box([0.9, 0.9], [1.1, 1.1]), 1.0)


def test_system_file_round_trip(tm, rng):
    text = format_system(tm)
    s = parse_system(text)
    x = tm.domain.sample(rng, 20)
    assert np.array_equal(step(s, x), step(tm, x))
    assert np.array_equal(s.safety(x), tm.safety(x))
    assert s.domain == tm.domain and s.dt == tm.dt


def test_system_file_errors_are_line_anchored():
    good = "n 1\ndt 0.1\nlo -1\nhi 1\nf1 (mul 0.5 x1)\n"
    parse_system(good)
    with pytest.raises(DynamicsError, match="line 6"):
        parse_system(good + "colour red\n")
    with pytest.raises(DynamicsError, match="line 5"):
        parse_system(good.replace("(mul 0.5 x1)", "(mul 0.5 x1"))
    with pytest.raises(DynamicsError, match="missing"):
        parse_system("n 1\ndt 0.1\nlo -1\nhi 1\n")


def test_load_system(tmp_path):
    assert load_system("vdp").name == "vdp"
    p = tmp_path / "sys.txt"
    p.write_text(format_system(builtin("vdp")))
    assert load_system(str(p)).n == 2
    with pytest.raises(DynamicsError):
        load_system("no_such_system")
