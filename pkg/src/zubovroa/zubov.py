"""Safety transform, value-function labels and Zubov residuals.

Convention: the scaling factor mu is folded into alpha once, so
``alpha(x) = mu * dt * |x|^2`` everywhere (labels, training loss and
residual checks), and labels are ``W_hat = 1 - exp(-S)`` with ``S`` the
accumulated sum of ``gamma * alpha`` along the trajectory.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace

import numpy as np

from .dynamics import SystemDef, step
from .expr import ExprGraph

CONVERGED = "converged"
UNSAFE = "unsafe"
DIVERGED = "diverged"
TRUNCATED = "truncated"
STATUSES = (CONVERGED, UNSAFE, DIVERGED, TRUNCATED)

# 1 - exp(-40) is 1 to double precision; the label scale is chosen so that the
# largest accepted sum maps there
LABEL_SATURATION = 40.0


@dataclass(frozen=True)
class SafetySpec:
    g: ExprGraph | None = None
    gamma_floor: float = 1.0

    @classmethod
    def of(cls, sys: SystemDef) -> "SafetySpec":
        return cls(sys.safety)

    def g_value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.g is None:
            return np.full(x.shape[:-1], -np.inf)
        return np.asarray(self.g(x))

    def is_safe(self, x) -> np.ndarray:
        return self.g_value(x) < 1.0


@dataclass(frozen=True)
class AlphaSpec:
    base_scale: float
    mu: float = 1.0

    @property
    def alpha_m(self) -> float:
        return self.mu * self.base_scale

    @property
    def alpha_M(self) -> float:
        return self.mu * self.base_scale

    def with_mu(self, mu: float) -> "AlphaSpec":
        return replace(self, mu=float(mu))


@dataclass(frozen=True)
class LabelConfig:
    """Labeling parameters.

    ``horizon`` caps the simulation length; a trajectory is considered
    converged once its Euclidean norm drops below ``tol``.
    """

    horizon: int = 2000
    c_max: float = 40.0
    c_x: float | None = None
    tol: float = 1e-3

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if not self.c_max > 0:
            raise ValueError("c_max must be positive")

    @property
    def mu(self) -> float:
        return LABEL_SATURATION / self.c_max


@dataclass(frozen=True)
class LabeledSample:
    x: np.ndarray
    w_hat: float
    status: str


def gamma(spec: SafetySpec, x):
    """1 + 1/relu(1 - g(x)), with 1/0 read as +inf."""
    gv = spec.g_value(x)
    margin = np.maximum(1.0 - gv, 0.0)
    with np.errstate(divide="ignore"):
        out = 1.0 + np.where(margin > 0, 1.0 / np.where(margin > 0, margin, 1.0), np.inf)
    if spec.g is None:
        out = np.ones_like(out)
    return float(out) if np.ndim(out) == 0 else out


def alpha(spec: AlphaSpec, x):
    x = np.asarray(x, dtype=float)
    out = spec.mu * spec.base_scale * np.sum(x * x, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def xi(safety: SafetySpec, aspec: AlphaSpec, x):
    """1 - exp(-gamma alpha); equals 1 outside the safe set."""
    ga = _gamma_alpha(safety, aspec, x)
    out = np.where(np.isinf(ga), 1.0, -np.expm1(-np.where(np.isinf(ga), 0.0, ga)))
    return float(out) if np.ndim(out) == 0 else out


def beta_coeff(safety: SafetySpec, aspec: AlphaSpec, x):
    """exp(gamma alpha) - 1; +inf outside the safe set."""
    ga = _gamma_alpha(safety, aspec, x)
    with np.errstate(over="ignore"):
        out = np.expm1(ga)
    return float(out) if np.ndim(out) == 0 else out


def _gamma_alpha(safety, aspec, x):
    a = np.asarray(alpha(aspec, x))
    g = np.asarray(gamma(safety, x))
    # gamma = inf at the origin cannot happen (0 is safe), but guard 0*inf
    with np.errstate(invalid="ignore"):
        return np.where(a == 0, 0.0, g * a)


def zubov_residual(W, sys: SystemDef, safety: SafetySpec, aspec: AlphaSpec, x):
    """W(x) - W(f(x)) - xi(x) (1 - W(f(x)))  (the residual trained on)."""
    x = np.asarray(x, dtype=float)
    fx = step(sys, x)
    wx, wf = np.asarray(W(x)), np.asarray(W(fx))
    out = wx - wf - xi(safety, aspec, x) * (1.0 - wf)
    return float(out) if np.ndim(out) == 0 else out


def zubov_residual_beta(W, sys: SystemDef, safety: SafetySpec, aspec: AlphaSpec, x):
    """W(x) - W(f(x)) - beta(x) (1 - W(x)); only meaningful on safe points."""
    x = np.asarray(x, dtype=float)
    fx = step(sys, x)
    wx, wf = np.asarray(W(x)), np.asarray(W(fx))
    out = wx - wf - beta_coeff(safety, aspec, x) * (1.0 - wx)
    return float(out) if np.ndim(out) == 0 else out


def lyapunov_residual(V, sys: SystemDef, safety: SafetySpec, aspec: AlphaSpec, x):
    """V(x) - gamma(x) alpha(x) - V(f(x))  (maximal Lyapunov equation)."""
    x = np.asarray(x, dtype=float)
    out = np.asarray(V(x)) - _gamma_alpha(safety, aspec, x) - np.asarray(V(step(sys, x)))
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# labeling

def accumulate(sys: SystemDef, safety: SafetySpec, aspec: AlphaSpec, cfg: LabelConfig,
               xs, budget: float | None = None):
    """Simulate a batch of initial states and accumulate sum(gamma * alpha).

    Returns ``(S, status)``. A trajectory that enters {g >= 1} is unsafe; one
    whose sum exceeds ``budget`` or whose max-norm exceeds C_X is diverged.
    S is +inf for unsafe and diverged samples.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    m = len(xs)
    c_x = cfg.c_x if cfg.c_x is not None else sys.default_escape_threshold()
    S = np.zeros(m)
    status = np.full(m, TRUNCATED, dtype=object)
    active = np.ones(m, dtype=bool)
    x = xs.copy()
    for _ in range(cfg.horizon + 1):
        idx = np.flatnonzero(active)
        if not len(idx):
            break
        xa = x[idx]
        bad = ~np.all(np.isfinite(xa), axis=1) | (np.max(np.abs(xa), axis=1) > c_x)
        if np.any(bad):
            status[idx[bad]] = DIVERGED
            S[idx[bad]] = np.inf
            active[idx[bad]] = False
            idx, xa = idx[~bad], xa[~bad]
        ga = _gamma_alpha(safety, aspec, xa)
        S[idx] += ga
        unsafe = np.isinf(ga)
        if np.any(unsafe):
            status[idx[unsafe]] = UNSAFE
            S[idx[unsafe]] = np.inf
            active[idx[unsafe]] = False
            idx, xa = idx[~unsafe], xa[~unsafe]
        if budget is not None:
            # a sum past the budget means the state is outside the attraction basin
            over = S[idx] > budget
            if np.any(over):
                status[idx[over]] = DIVERGED
                S[idx[over]] = np.inf
                active[idx[over]] = False
                idx, xa = idx[~over], xa[~over]
        done = np.sqrt(np.sum(xa * xa, axis=1)) < cfg.tol
        if np.any(done):
            status[idx[done]] = CONVERGED
            active[idx[done]] = False
            idx, xa = idx[~done], xa[~done]
        if len(idx):
            with np.errstate(over="ignore", invalid="ignore"):
                x[idx] = step(sys, xa)
    return S, status


def label_batch(sys, safety: SafetySpec, aspec: AlphaSpec, cfg: LabelConfig, xs):
    """Labels for a batch of states: returns ``(w_hat, status)`` arrays.

    ``aspec.mu`` is the scale folded into alpha; the unsafe short-circuit fires
    once the scaled sum exceeds ``mu * C_max``.
    """
    S, status = accumulate(sys, safety, aspec, cfg, xs, budget=aspec.mu * cfg.c_max)
    with np.errstate(over="ignore"):
        w = -np.expm1(-S)
    w = np.clip(np.where(np.isnan(w), 1.0, w), 0.0, 1.0)
    return w, status


def label(sys, safety: SafetySpec, aspec: AlphaSpec, cfg: LabelConfig, x) -> LabeledSample:
    w, st = label_batch(sys, safety, aspec, cfg, np.asarray(x, dtype=float)[None, :])
    return LabeledSample(np.asarray(x, dtype=float), float(w[0]), str(st[0]))


def pilot_c_max(sys: SystemDef, safety: SafetySpec, cfg: LabelConfig, n_pilot: int = 2000,
                seed: int = 0, percentile: float = 97.5) -> float:
    """C_max as a percentile of finite unscaled sums over a uniform pilot sample."""
    rng = np.random.default_rng(seed)
    xs = sys.domain.sample(rng, n_pilot)
    S, status = accumulate(sys, safety, AlphaSpec(sys.dt, 1.0), cfg, xs)
    finite = S[(status == CONVERGED) & np.isfinite(S)]
    if not len(finite):
        raise ValueError("pilot run produced no converged trajectories")
    return float(np.percentile(finite, percentile))


class Dataset:
    """Labeled samples stored column-wise. Indexing yields LabeledSample."""

    def __init__(self, x, w_hat, status):
        self.x = np.asarray(x, dtype=float)
        self.w_hat = np.asarray(w_hat, dtype=float)
        self.status = np.asarray(status, dtype=object)

    def __len__(self):
        return len(self.x)

    def __getitem__(self, i) -> LabeledSample:
        return LabeledSample(self.x[i], float(self.w_hat[i]), str(self.status[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def trainable(self) -> np.ndarray:
        """Mask of samples used in the data term (truncated ones are excluded)."""
        return self.status != TRUNCATED

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.x.shape[1]
        w.writerow([f"x_{i + 1}" for i in range(n)] + ["w_hat", "status"])
        for xi_, wi, si in zip(self.x, self.w_hat, self.status):
            w.writerow([repr(float(v)) for v in xi_] + [repr(float(wi)), si])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Dataset":
        rows = list(csv.reader(io.StringIO(text)))
        header = rows[0]
        n = len(header) - 2
        if header[-2:] != ["w_hat", "status"] or n < 1:
            raise ValueError("dataset CSV needs columns x_1..x_n, w_hat, status")
        body = rows[1:]
        x = np.array([[float(v) for v in r[:n]] for r in body]).reshape(-1, n)
        w = np.array([float(r[n]) for r in body])
        st = [r[n + 1] for r in body]
        bad = set(st) - set(STATUSES)
        if bad:
            raise ValueError(f"unknown status values {sorted(bad)}")
        return cls(x, w, st)


def sample_dataset(sys: SystemDef, safety: SafetySpec, aspec: AlphaSpec, cfg: LabelConfig,
                   n_data: int, seed: int) -> Dataset:
    """Uniform samples over the domain box, labeled, with the origin appended."""
    if n_data < 1:
        raise ValueError("n_data must be at least 1")
    rng = np.random.default_rng(seed)
    xs = sys.domain.sample(rng, n_data)
    xs = np.vstack([xs, np.zeros((1, sys.n))])
    w, st = label_batch(sys, safety, aspec, cfg, xs)
    return Dataset(xs, w, st)
