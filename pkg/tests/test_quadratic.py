import numpy as np
import pytest

from zubovroa import expr as ex
from zubovroa.dynamics import builtin, step
from zubovroa.intervals import Box
from zubovroa.quadratic import (CertificateError, StabilityError, c1_certificate, c2_upper_bound,
                                default_eps, linearize, search_c1, solve_dlyap, spectral_radius,
                                vp_eval, vp_graph, vp_plus, vp_plus_graph)

from conftest import linear_system, scalar_system


def test_scalar_dlyap():
    assert solve_dlyap([[0.5]], [[1.0]])[0, 0] == pytest.approx(4 / 3)


def test_benchmark_dlyap(vdp, tm):
    P = solve_dlyap(linearize(vdp), np.eye(2))
    assert np.allclose(P, [[16.3896, -5.57015], [-5.57015, 11.4027]], rtol=1e-4)
    P = solve_dlyap(linearize(tm), np.eye(2))
    assert np.allclose(P, [[21.9377, 10.8408], [10.8408, 33.6321]], rtol=1e-4)


def test_dlyap_residual_on_random_schur_matrices(rng):
    for _ in range(100):
        n = int(rng.integers(1, 7))
        A = rng.normal(size=(n, n))
        A *= rng.uniform(0.1, 0.95) / spectral_radius(A)
        M = rng.normal(size=(n, n))
        Q = M @ M.T + n * np.eye(n)
        P = solve_dlyap(A, Q)
        assert np.allclose(P, P.T)
        assert np.linalg.norm(A.T @ P @ A - P + Q) / np.linalg.norm(Q) <= 1e-9
        assert np.min(np.linalg.eigvalsh(P)) > 0


def test_unstable_linearization_rejected():
    with pytest.raises(StabilityError, match="not exponentially stable"):
        solve_dlyap([[1.0, 0.1], [0.0, 0.9]], np.eye(2))


def test_linear_decrease_is_exact(rng):
    A = np.array([[0.6, 0.2], [-0.1, 0.7]])
    s = linear_system(A)
    P = solve_dlyap(A, np.eye(2))
    x = rng.normal(size=(50, 2))
    assert np.allclose(vp_plus(s, P, x), -np.sum(x * x, axis=1), atol=1e-10)
    assert vp_plus(s, P, [0.0, 0.0]) == 0 and vp_eval(P, [0.0, 0.0]) == 0


def test_vdp_decreases_near_origin(vdp):
    P = solve_dlyap(linearize(vdp), np.eye(2))
    assert vp_plus(vdp, P, [0.1, 0.1]) < 0


def test_graphs_agree_with_point_functions(tm, rng):
    P = solve_dlyap(linearize(tm), np.eye(2))
    x = tm.domain.sample(rng, 100)
    assert np.allclose(vp_graph(P)(x), vp_eval(P, x))
    assert np.allclose(vp_plus_graph(tm, P)(x), vp_plus(tm, P, x))


def test_scalar_c1_hand_values():
    s = scalar_system(lambda x: 0.5 * x + ex.square(x), radius=3.0)
    P = np.array([[4 / 3]])
    cert = c1_certificate(s, None, P, [[1.0]], 0.01, [1.0])
    beta = np.sqrt(4 / 3)
    assert cert.eta[0] == pytest.approx(2.0)
    assert cert.alpha_q == pytest.approx(1.0)
    assert cert.beta_q == pytest.approx(beta)
    a1 = ((-beta + np.sqrt(beta ** 2 + 3.96)) / 2) ** 2
    assert cert.a1 == pytest.approx(a1)
    assert cert.a2 == pytest.approx(4 / 3)
    assert cert.c1 == pytest.approx(min(a1, 4 / 3))
    # independent oracle: decrease on a fine grid of {V_P < c1}
    x = np.linspace(-1, 1, 20001)[:, None]
    x = x[vp_eval(P, x) < cert.c1]
    assert np.all(vp_plus(s, P, x) <= -0.01 * x[:, 0] ** 2 + 1e-15)


def test_linear_c1_is_a2():
    s = scalar_system(lambda x: 0.5 * x, radius=3.0)
    cert = c1_certificate(s, None, [[4 / 3]], [[1.0]], 0.01, [1.0])
    assert cert.a1 == np.inf and cert.c1 == pytest.approx(4 / 3)


def test_c1_preconditions(vdp):
    P = solve_dlyap(linearize(vdp), np.eye(2))
    with pytest.raises(CertificateError):
        c1_certificate(vdp, vdp.safety, P, np.eye(2), 1.0, [0.5, 0.5])
    with pytest.raises(CertificateError):
        # box reaches the obstacle at (1, 1)
        c1_certificate(vdp, vdp.safety, P, np.eye(2), 0.01, [1.2, 1.2])


def test_c2_upper_bound_values(vdp):
    P = solve_dlyap(linearize(vdp), np.eye(2))
    assert c2_upper_bound(P, vdp.domain) == pytest.approx(85.43, rel=1e-3)
    assert c2_upper_bound(np.eye(3), Box.symmetric([1, 1, 1])) == pytest.approx(1.0)
    assert c2_upper_bound(np.array([[2.5]]), Box([-2.0], [3.0])) == pytest.approx(10.0)


def test_c2_upper_bound_is_tight(vdp, tm):
    for s in (vdp, tm):
        P = solve_dlyap(linearize(s), np.eye(2))
        c = c2_upper_bound(P, s.domain)
        Pinv = np.linalg.inv(P)
        half = np.minimum(-s.domain.lo, s.domain.hi)
        i = int(np.argmin(half ** 2 / np.diag(Pinv)))
        # the maximiser of x_i on {x'Px <= c} is sqrt(c) P^-1 e_i / sqrt(P^-1_ii)
        e = np.zeros(2)
        e[i] = 1.0
        touch = np.sqrt(c) * Pinv @ e / np.sqrt(Pinv[i, i])
        assert abs(touch[i]) == pytest.approx(half[i])
        outside = touch * np.sqrt(1.001)
        assert vp_eval(P, outside) <= 1.001 * c * (1 + 1e-12)
        assert not s.domain.contains(outside) or not s.domain.contains(-outside)


@pytest.mark.parametrize("name", ["vdp", "two_machine"])
def test_local_certificate_grid_oracle(name):
    s = builtin(name)
    Q = np.eye(2)
    P = solve_dlyap(linearize(s), Q)
    eps = default_eps(Q)
    cert = search_c1(s, s.safety, P, Q, eps)
    u = np.linspace(s.domain.lo[0], s.domain.hi[0], 201)
    v = np.linspace(s.domain.lo[1], s.domain.hi[1], 201)
    X = np.stack(np.meshgrid(u, v), -1).reshape(-1, 2)
    X = X[vp_eval(P, X) <= cert.c1]
    assert len(X) > 10
    assert np.all(vp_plus(s, P, X) <= -eps * np.sum(X * X, axis=1))
    assert np.all(s.safety(X) < 1)


def test_search_c1_prefers_larger_values(vdp):
    Q = np.eye(2)
    P = solve_dlyap(linearize(vdp), Q)
    best = search_c1(vdp, vdp.safety, P, Q, 0.01)
    base = c1_certificate(vdp, vdp.safety, P, Q, 0.01, [0.625, 0.625])
    assert best.c1 >= base.c1
    assert Box.symmetric(best.B_radius).width.min() > 0
    assert "c1 =" in best.report()
