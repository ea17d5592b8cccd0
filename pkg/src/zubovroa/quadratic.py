"""Quadratic Lyapunov certificates V_P(x) = x'Px around the origin."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .dynamics import SystemDef, certify_below, hessian_eta_bound, jacobian_at, step
from .expr import ExprGraph
from .intervals import Box


class StabilityError(ValueError):
    pass


class CertificateError(ValueError):
    pass


def spectral_radius(A) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(np.atleast_2d(A)))))


def solve_dlyap(A, Q) -> np.ndarray:
    """Solve A'PA - P = -Q through the Kronecker-vectorised linear system."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n) or Q.shape != (n, n):
        raise ValueError("A and Q must be square and of equal size")
    if spectral_radius(A) >= 1.0:
        raise StabilityError("origin not exponentially stable under linearization")
    # vec(A'PA) = (A' kron A') vec(P) for column-major vec
    K = np.eye(n * n) - np.kron(A.T, A.T)
    p = np.linalg.solve(K, Q.reshape(-1, order="F"))
    P = p.reshape(n, n, order="F")
    return 0.5 * (P + P.T)


def sqrtm_spd(P) -> np.ndarray:
    w, V = np.linalg.eigh(P)
    if np.min(w) <= 0:
        raise ValueError("matrix is not positive definite")
    return (V * np.sqrt(w)) @ V.T


def vp_eval(P, x):
    x = np.asarray(x, dtype=float)
    out = np.einsum("...i,ij,...j->...", x, P, x)
    return float(out) if np.ndim(out) == 0 else out


def vp_plus(sys: SystemDef, P, x):
    """V_P(f(x)) - V_P(x)."""
    x = np.asarray(x, dtype=float)
    out = vp_eval(P, step(sys, x)) - vp_eval(P, x)
    return float(out) if np.ndim(out) == 0 else out


def quadratic_form_node(P, terms) -> ex.Node:
    """sum_ij P_ij t_i t_j with diagonal terms written as squares."""
    n = len(terms)
    out = ex.const(0.0)
    for i in range(n):
        out = out + P[i, i] * ex.square(terms[i])
        for j in range(i + 1, n):
            c = P[i, j] + P[j, i]
            if c != 0.0:
                out = out + c * (terms[i] * terms[j])
    return out


def vp_graph(P) -> ExprGraph:
    n = P.shape[0]
    return ExprGraph(quadratic_form_node(P, ex.variables(n)), n)


def vp_plus_graph(sys: SystemDef, P) -> ExprGraph:
    fx = [c.root for c in sys.components]
    node = quadratic_form_node(P, fx) - quadratic_form_node(P, ex.variables(sys.n))
    return ExprGraph(node, sys.n)


def c2_upper_bound(P, domain: Box) -> float:
    """Largest c with {x'Px <= c} inside the box (necessary and sufficient)."""
    if not (np.all(domain.lo < 0) and np.all(domain.hi > 0)):
        raise ValueError("domain must contain the origin in its interior")
    Pinv = np.linalg.inv(np.atleast_2d(P))
    half = np.minimum(-domain.lo, domain.hi)
    return float(np.min(half ** 2 / np.diag(Pinv)))


@dataclass(frozen=True, eq=False)
class QuadCert:
    A: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    eps: float
    d: float
    B_radius: np.ndarray
    eta: np.ndarray
    alpha_q: float
    beta_q: float
    a1: float
    a2: float
    c1: float
    norm_P: float
    lambda_min_P: float
    norm_similar: float

    @property
    def box(self) -> Box:
        return Box.symmetric(self.B_radius)

    def report(self) -> str:
        lines = ["quadratic certificate"]
        lines.append("P = " + np.array2string(self.P, precision=6, separator=", ").replace("\n", ""))
        lines.append("A = " + np.array2string(self.A, precision=6, separator=", ").replace("\n", ""))
        lines.append(f"eps = {self.eps:.6g}")
        lines.append(f"d = lambda_min(Q) - eps = {self.d:.6g}")
        lines.append("B radius = " + " ".join(f"{v:.6g}" for v in self.B_radius))
        lines.append("eta_B = " + " ".join(f"{v:.6g}" for v in self.eta))
        lines.append(f"||P|| = {self.norm_P:.6g}")
        lines.append(f"lambda_min(P) = {self.lambda_min_P:.6g}")
        lines.append(f"||P^1/2 A P^-1/2|| = {self.norm_similar:.6g}")
        lines.append(f"alpha_q = ||P|| ||eta||^2 / (4 lambda_min(P)) = {self.alpha_q:.6g} (corrected form)")
        lines.append(f"beta_q = {self.beta_q:.6g}")
        lines.append(f"a1 = {self.a1:.6g}")
        lines.append(f"a2 = {self.a2:.6g}")
        lines.append(f"c1 = {self.c1:.6g}")
        return "\n".join(lines)


def c1_certificate(sys: SystemDef, safety_g: ExprGraph | None, P, Q, eps: float,
                   B_radius) -> QuadCert:
    """Local certificate: V_P < c1 implies x in B and V_P^+ <= -eps |x|^2."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.abs(np.asarray(B_radius, dtype=float))
    n = sys.n
    if R.shape != (n,) or np.any(R <= 0):
        raise CertificateError("B radius must be a positive n-vector")
    lam_q = float(np.min(np.linalg.eigvalsh(Q)))
    if not 0 < eps < lam_q:
        raise CertificateError(f"eps must lie in (0, lambda_min(Q)={lam_q:.6g})")
    box = Box.symmetric(R)
    if safety_g is not None and not certify_below(safety_g, box, 1.0):
        raise CertificateError("box B is not contained in the safe set")
    A = jacobian_at(sys, np.zeros(n))
    eta = hessian_eta_bound(sys, box)
    d = lam_q - eps
    lp = np.linalg.eigvalsh(P)
    norm_P, lam_p = float(lp.max()), float(lp.min())
    S = sqrtm_spd(P)
    S_inv = np.linalg.inv(S)
    norm_similar = float(np.linalg.norm(S @ A @ S_inv, 2))
    alpha_q = norm_P * float(eta @ eta) / (4.0 * lam_p)
    beta_q = float(np.linalg.norm(np.abs(S) @ eta)) * norm_similar
    if alpha_q > 0:
        a1 = (-beta_q + np.sqrt(beta_q ** 2 + 4.0 * alpha_q * d)) ** 2 / (2.0 * alpha_q) ** 2
    else:
        a1 = np.inf
    a2 = float(np.min(R ** 2 / np.diag(np.linalg.inv(P))))
    c1 = float(min(a1, a2))
    return QuadCert(A, Q, P, eps, d, R, eta, alpha_q, beta_q, float(a1), a2, c1,
                    norm_P, lam_p, norm_similar)


def default_box_radius(sys: SystemDef) -> np.ndarray:
    return 0.25 * np.minimum(-sys.domain.lo, sys.domain.hi)


def search_c1(sys: SystemDef, safety_g: ExprGraph | None, P, Q, eps: float,
              trials: int = 8, factor: float = 1.5) -> QuadCert:
    """Pick B = [-R, R] by scaling a default radius to maximise c1.

    Starts at a quarter of the domain half-widths and walks by ``factor`` in
    the improving direction (shrinking first when the start is infeasible),
    evaluating at most ``trials`` radii.
    """
    R0 = default_box_radius(sys)
    tried = {}

    def evaluate(k):
        if k not in tried:
            try:
                tried[k] = c1_certificate(sys, safety_g, P, Q, eps, R0 * factor ** k)
            except CertificateError:
                tried[k] = None
        return tried[k]

    def score(k):
        cert = evaluate(k)
        return -np.inf if cert is None else cert.c1

    k = 0
    # walk down until feasible
    while score(k) == -np.inf and len(tried) < trials:
        k -= 1
    if score(k) == -np.inf:
        raise CertificateError("no feasible box B found")
    direction = 1 if len(tried) < trials and score(k + 1) > score(k) else -1
    while len(tried) < trials:
        nxt = k + direction
        if score(nxt) > score(k):
            k = nxt
        else:
            break
    return tried[k]


def default_eps(Q) -> float:
    return 0.01 * float(np.min(np.linalg.eigvalsh(np.atleast_2d(Q))))


def linearize(sys: SystemDef) -> np.ndarray:
    return jacobian_at(sys, np.zeros(sys.n))
