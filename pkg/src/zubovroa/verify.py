"""Interval branch-and-bound certification of sublevel-set implications.

An implication is ``premise(x) => conclusion(x)`` for all x in a domain box,
where premise and conclusion are conjunctions of range constraints on
functions that support both point evaluation (``fn(x)`` on ``(N, n)``) and
interval evaluation (``fn.bounds(lo, hi)`` on batches of boxes).
"""

from __future__ import annotations

import io
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import intervals as ia
from .dynamics import SystemDef, image_bounds, step
from .expr import ExprGraph
from .intervals import Box, Interval
from .net import MlpNetwork
from .quadratic import QuadCert, c2_upper_bound, vp_graph, vp_plus_graph

CERTIFIED = "certified"
FALSIFIED = "falsified"
UNKNOWN = "unknown"
EXIT_CODES = {CERTIFIED: 0, FALSIFIED: 1, UNKNOWN: 2}

DELTA_STRICT = 1e-9


# ---------------------------------------------------------------------------
# interval bound propagation through the network

def _ibp(net: MlpNetwork, lo, hi):
    lo = np.atleast_2d(np.asarray(lo, dtype=float))
    hi = np.atleast_2d(np.asarray(hi, dtype=float))
    last = len(net.weights) - 1
    eps = np.finfo(float).eps
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        c = 0.5 * (lo + hi)
        r = 0.5 * (hi - lo)
        absW = np.abs(W)
        mid = c @ W.T + b
        rad = r @ absW.T
        # floating-point error of the two products and the bias add
        err = (W.shape[1] + 2) * eps * (np.abs(c) @ absW.T + rad + np.abs(b)) + 1e-300
        lo = np.nextafter(mid - rad - err, -np.inf)
        hi = np.nextafter(mid + rad + err, np.inf)
        if i != last:
            lo, hi = ia.tanh(lo, hi)
    return lo[:, 0], hi[:, 0]


def net_interval_bounds(net: MlpNetwork, box: Box) -> Interval:
    lo, hi = _ibp(net, box.lo, box.hi)
    return Interval(float(lo[0]), float(hi[0]))


class NetFunction:
    """W_N as a box-evaluable function."""

    def __init__(self, net: MlpNetwork):
        self.net = net

    def __call__(self, x):
        return self.net(x)

    def bounds(self, lo, hi):
        return _ibp(self.net, lo, hi)


class NetDecrease:
    """W_N(f(x)) - W_N(x); the image box of f is enclosed before propagation."""

    def __init__(self, net: MlpNetwork, sys: SystemDef):
        self.net, self.sys = net, sys

    def __call__(self, x):
        x = np.atleast_2d(x)
        return self.net(step(self.sys, x)) - self.net(x)

    def bounds(self, lo, hi):
        flo, fhi = image_bounds(self.sys, lo, hi)
        alo, ahi = _ibp(self.net, flo, fhi)
        blo, bhi = _ibp(self.net, lo, hi)
        return ia.sub(alo, ahi, blo, bhi)


class MeanValue:
    """Mean-value enclosure F(c) + G(X)(X - c) intersected with F's own bounds.

    ``grad`` returns interval bounds of the gradient over each box as two
    ``(N, n)`` arrays.
    """

    def __init__(self, fn, grad):
        self.fn, self.grad = fn, grad

    def __call__(self, x):
        return self.fn(x)

    def bounds(self, lo, hi):
        nlo, nhi = self.fn.bounds(lo, hi)
        c = 0.5 * (lo + hi)
        clo, chi = self.fn.bounds(c, c)
        glo, ghi = self.grad(lo, hi)
        dlo, dhi = ia.sub(lo, hi, c, c)
        tlo, thi = ia.mul(glo, ghi, dlo, dhi)
        # sum of n outward-rounded terms
        slo, shi = clo, chi
        for j in range(lo.shape[1]):
            slo, shi = ia.add(slo, shi, tlo[:, j], thi[:, j])
        return np.maximum(nlo, slo), np.minimum(nhi, shi)


class Taylor2:
    """Second-order centred form of an expression graph.

    F(c) + grad F(c)(X - c) + 1/2 (X - c)' H(X) (X - c), with the value and
    gradient taken at the box centre and the Hessian enclosed over the box;
    the result is intersected with the natural extension.
    """

    def __init__(self, graph: ExprGraph):
        self.graph = graph
        n = graph.n
        self.grad = [graph.diff(j) for j in range(n)]
        self.hess = [[self.grad[j].diff(k) for k in range(n)] for j in range(n)]

    def __call__(self, x):
        return self.graph(x)

    def bounds(self, lo, hi):
        lo = np.atleast_2d(lo)
        hi = np.atleast_2d(hi)
        N, n = lo.shape

        def ev(g, a, b):
            vlo, vhi = g.bounds(a, b)
            return np.broadcast_to(vlo, (N,)), np.broadcast_to(vhi, (N,))

        c = 0.5 * (lo + hi)
        dlo, dhi = ia.sub(lo, hi, c, c)
        slo, shi = ev(self.graph, c, c)
        for j in range(n):
            t = ia.mul(*ev(self.grad[j], c, c), dlo[:, j], dhi[:, j])
            slo, shi = ia.add(slo, shi, *t)
        for j in range(n):
            for k in range(j, n):
                hlo, hhi = ev(self.hess[j][k], lo, hi)
                if j == k:
                    plo, phi = ia.square(dlo[:, j], dhi[:, j])
                    hlo, hhi = 0.5 * hlo, 0.5 * hhi
                else:
                    plo, phi = ia.mul(dlo[:, j], dhi[:, j], dlo[:, k], dhi[:, k])
                slo, shi = ia.add(slo, shi, *ia.mul(hlo, hhi, plo, phi))
        nlo, nhi = ev(self.graph, lo, hi)
        return np.maximum(slo, nlo), np.minimum(shi, nhi)


# ---------------------------------------------------------------------------
# implication specs and verdicts

@dataclass(frozen=True)
class Constraint:
    """lo <= fn(x) <= hi; ``strict`` turns both sides into strict inequalities."""

    fn: object
    lo: float = -math.inf
    hi: float = math.inf
    strict: bool = False
    name: str = ""

    def holds(self, v):
        if self.strict:
            return (v > self.lo) & (v < self.hi)
        return (v >= self.lo) & (v <= self.hi)

    def proven(self, vlo, vhi, delta):
        d = delta if self.strict else 0.0
        return (vlo >= self.lo + d) & (vhi <= self.hi - d)

    def excluded(self, vlo, vhi):
        return (vhi < self.lo) | (vlo > self.hi)


@dataclass(frozen=True)
class ImplicationSpec:
    premise: tuple
    conclusion: tuple
    domain: Box
    min_width: float = 1e-6
    max_boxes: int = 2_000_000
    delta_strict: float = DELTA_STRICT
    chunk: int = 65536

    def __post_init__(self):
        if not self.min_width > 0:
            raise ValueError("min_width must be positive")
        object.__setattr__(self, "premise", tuple(self.premise))
        object.__setattr__(self, "conclusion", tuple(self.conclusion))

    def premise_holds(self, x):
        ok = np.ones(len(x), dtype=bool)
        for c in self.premise:
            ok &= c.holds(np.asarray(c.fn(x)).reshape(-1))
        return ok

    def violations(self, x):
        """Boolean (N, n_conclusions) array of violated conclusions."""
        cols = [~c.holds(np.asarray(c.fn(x)).reshape(-1)) for c in self.conclusion]
        return np.stack(cols, axis=1) if cols else np.zeros((len(x), 0), bool)


@dataclass
class Verdict:
    status: str
    boxes_processed: int
    witness: np.ndarray | None = None
    violated: str | None = None
    hardest_box: Box | None = None
    depth_histogram: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.status == CERTIFIED

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.status]

    def report(self) -> str:
        buf = io.StringIO()
        buf.write(f"status,{self.status}\n")
        buf.write(f"boxes_processed,{self.boxes_processed}\n")
        for depth in sorted(self.depth_histogram):
            buf.write(f"depth_{depth},{self.depth_histogram[depth]}\n")
        if self.witness is not None:
            buf.write("witness," + ",".join(repr(float(v)) for v in self.witness) + "\n")
            buf.write(f"violated,{self.violated}\n")
        if self.hardest_box is not None:
            buf.write("hardest_lo," + ",".join(repr(float(v)) for v in self.hardest_box.lo) + "\n")
            buf.write("hardest_hi," + ",".join(repr(float(v)) for v in self.hardest_box.hi) + "\n")
        return buf.getvalue()


def combine(verdicts) -> Verdict:
    """Falsified dominates, then Unknown; Certified only if all are."""
    verdicts = list(verdicts)
    total = sum(v.boxes_processed for v in verdicts)
    hist = Counter()
    for v in verdicts:
        hist.update(v.depth_histogram)
    for status in (FALSIFIED, UNKNOWN):
        for v in verdicts:
            if v.status == status:
                return Verdict(status, total, v.witness, v.violated, v.hardest_box, dict(hist))
    return Verdict(CERTIFIED, total, depth_histogram=dict(hist))


def check_implication(spec: ImplicationSpec) -> Verdict:
    """Breadth-first interval branch and bound.

    A box is discharged when some premise is provably false on it or every
    pending conclusion is provably true. Box centres are checked in point
    arithmetic to find counterexamples. Children inherit which conclusions
    were already proven.
    """
    n = spec.domain.n
    nconc = len(spec.conclusion)
    queue = [(spec.domain.lo[None, :].copy(), spec.domain.hi[None, :].copy(),
              np.ones((1, nconc), bool), np.zeros(1, int))]
    processed = 0
    hist = Counter()
    hardest = None
    while queue:
        lo, hi, pending, depth = queue.pop(0)
        if len(lo) > spec.chunk:
            k = spec.chunk
            queue.insert(0, (lo[k:], hi[k:], pending[k:], depth[k:]))
            lo, hi, pending, depth = lo[:k], hi[:k], pending[:k], depth[:k]
        if processed + len(lo) > spec.max_boxes:
            take = spec.max_boxes - processed
            processed = spec.max_boxes
            hist.update(depth[:take].tolist())
            box = Box(lo[0], hi[0]) if hardest is None else hardest
            return Verdict(UNKNOWN, processed, hardest_box=box, depth_histogram=dict(hist))
        processed += len(lo)
        hist.update(depth.tolist())

        alive = np.ones(len(lo), bool)
        for c in spec.premise:
            vlo, vhi = c.fn.bounds(lo, hi)
            alive &= ~c.excluded(np.broadcast_to(vlo, alive.shape), np.broadcast_to(vhi, alive.shape))
        lo, hi, pending, depth = lo[alive], hi[alive], pending[alive], depth[alive]
        if not len(lo):
            continue

        for j, c in enumerate(spec.conclusion):
            rows = np.flatnonzero(pending[:, j])
            if not len(rows):
                continue
            vlo, vhi = c.fn.bounds(lo[rows], hi[rows])
            ok = c.proven(np.broadcast_to(vlo, rows.shape), np.broadcast_to(vhi, rows.shape),
                          spec.delta_strict)
            pending[rows[ok], j] = False
        open_ = pending.any(axis=1)
        lo, hi, pending, depth = lo[open_], hi[open_], pending[open_], depth[open_]
        if not len(lo):
            continue

        centers = 0.5 * (lo + hi)
        bad = spec.premise_holds(centers) & spec.violations(centers).any(axis=1)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            w = centers[i]
            which = np.flatnonzero(spec.violations(w[None, :])[0])
            name = spec.conclusion[which[0]].name or f"conclusion {which[0]}"
            return Verdict(FALSIFIED, processed, witness=w, violated=name,
                           depth_histogram=dict(hist))

        width = hi - lo
        floor = width.max(axis=1) < spec.min_width
        if np.any(floor):
            if hardest is None:
                i = int(np.flatnonzero(floor)[0])
                hardest = Box(lo[i], hi[i])
            lo, hi, pending, depth = lo[~floor], hi[~floor], pending[~floor], depth[~floor]
            width = width[~floor]
            if not len(lo):
                continue
        d = np.argmax(width, axis=1)
        rows = np.arange(len(lo))
        mid = 0.5 * (lo[rows, d] + hi[rows, d])
        lo2, hi2 = lo.copy(), hi.copy()
        hi[rows, d] = mid
        lo2[rows, d] = mid
        queue.append((np.concatenate([lo, lo2]), np.concatenate([hi, hi2]),
                      np.concatenate([pending, pending]), np.concatenate([depth, depth]) + 1))
    if hardest is not None:
        return Verdict(UNKNOWN, processed, hardest_box=hardest, depth_histogram=dict(hist))
    return Verdict(CERTIFIED, processed, depth_histogram=dict(hist))


def grid_falsify(spec: ImplicationSpec, resolution: int = 201, chunk: int = 200_000):
    """Exhaustive uniform grid scan in point arithmetic.

    Returns the first grid point satisfying the premise and violating a
    conclusion, or None.
    """
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    n = spec.domain.n
    axes = [np.linspace(spec.domain.lo[i], spec.domain.hi[i], resolution) for i in range(n)]
    total = resolution ** n
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        coords = np.unravel_index(idx, (resolution,) * n)
        x = np.stack([axes[i][coords[i]] for i in range(n)], axis=1)
        bad = spec.premise_holds(x) & spec.violations(x).any(axis=1)
        if np.any(bad):
            return x[np.flatnonzero(bad)[0]]
    return None


def recheck_witness(spec: ImplicationSpec, x) -> bool:
    """True if ``x`` satisfies the premise and violates a conclusion."""
    x = np.asarray(x, dtype=float)[None, :]
    return bool(spec.premise_holds(x)[0] and spec.violations(x).any())


# ---------------------------------------------------------------------------
# quadratic and neural certificates

@dataclass(frozen=True)
class VerifyOptions:
    eps: float = 1e-4
    min_width: float = 1e-6
    max_boxes: int = 2_000_000
    centered: bool = True


def quadratic_spec(sys: SystemDef, safety: ExprGraph | None, P, c1: float, c2: float,
                   eps: float, opts: VerifyOptions = VerifyOptions()) -> ImplicationSpec:
    """{c1 <= V_P <= c2} => {V_P^+ <= -eps, g < 1} over the domain box."""
    vp = vp_graph(P)
    dv = vp_plus_graph(sys, P)
    dv_fn = Taylor2(dv) if opts.centered else dv
    conclusion = [Constraint(dv_fn, hi=-eps, name="V_P+ <= -eps")]
    if safety is not None:
        conclusion.append(Constraint(safety, hi=1.0, strict=True, name="g < 1"))
    return ImplicationSpec((Constraint(vp, lo=c1, hi=c2, name="c1 <= V_P <= c2"),),
                           tuple(conclusion), sys.domain, opts.min_width, opts.max_boxes)


def verify_quadratic(sys: SystemDef, safety: ExprGraph | None, cert: QuadCert, c2: float,
                     eps: float | None = None, opts: VerifyOptions = VerifyOptions()) -> Verdict:
    eps = opts.eps if eps is None else eps
    if not c2 > cert.c1:
        raise ValueError(f"c2={c2} must exceed c1={cert.c1}")
    upper = c2_upper_bound(cert.P, sys.domain)
    if c2 > upper:
        raise ValueError(f"c2={c2} exceeds the inclusion bound {upper}")
    return check_implication(quadratic_spec(sys, safety, cert.P, cert.c1, c2, eps, opts))


def _net_fn(net, centered):
    fn = NetFunction(net)
    if not centered:
        return fn
    return MeanValue(fn, lambda lo, hi: net_gradient_bounds(net, lo, hi))


def _net_decrease_fn(net, sys, centered):
    fn = NetDecrease(net, sys)
    if not centered:
        return fn
    jac = sys.jacobian_graphs

    def grad(lo, hi):
        # d/dx [W(f(x)) - W(x)] = J_f(x)^T grad W(f(x)) - grad W(x)
        flo, fhi = image_bounds(sys, lo, hi)
        gflo, gfhi = net_gradient_bounds(net, flo, fhi)
        gxlo, gxhi = net_gradient_bounds(net, lo, hi)
        N, n = lo.shape
        outlo = np.zeros((N, n))
        outhi = np.zeros((N, n))
        for j in range(n):
            slo, shi = ia.neg(gxlo[:, j], gxhi[:, j])
            for i in range(n):
                jlo, jhi = jac[i][j].bounds(lo, hi)
                jlo, jhi = np.broadcast_to(jlo, (N,)), np.broadcast_to(jhi, (N,))
                tlo, thi = ia.mul(jlo, jhi, gflo[:, i], gfhi[:, i])
                slo, shi = ia.add(slo, shi, tlo, thi)
            outlo[:, j], outhi[:, j] = slo, shi
        return outlo, outhi

    return MeanValue(fn, grad)


def net_gradient_bounds(net: MlpNetwork, lo, hi):
    """Interval enclosure of grad W_N over boxes, via interval backpropagation."""
    lo = np.atleast_2d(np.asarray(lo, dtype=float))
    hi = np.atleast_2d(np.asarray(hi, dtype=float))
    last = len(net.weights) - 1
    eps = np.finfo(float).eps
    derivs = []
    zlo, zhi = lo, hi
    for i, (W, b) in enumerate(zip(net.weights[:-1], net.biases[:-1])):
        c = 0.5 * (zlo + zhi)
        r = 0.5 * (zhi - zlo)
        absW = np.abs(W)
        mid = c @ W.T + b
        rad = r @ absW.T
        err = (W.shape[1] + 2) * eps * (np.abs(c) @ absW.T + rad + np.abs(b)) + 1e-300
        plo, phi = mid - rad - err, mid + rad + err
        tlo, thi = ia.tanh(plo, phi)
        # tanh' = 1 - tanh^2 over the pre-activation interval
        slo, shi = ia.square(tlo, thi)
        derivs.append((np.maximum(1.0 - shi, 0.0), np.minimum(1.0 - slo, 1.0)))
        zlo, zhi = tlo, thi
    # backward: row vector g starts as last-layer weights (exact)
    N = lo.shape[0]
    glo = np.broadcast_to(net.weights[last][0], (N, net.weights[last].shape[1])).copy()
    ghi = glo.copy()
    for i in range(last - 1, -1, -1):
        dlo, dhi = derivs[i]
        glo, ghi = ia.mul(glo, ghi, dlo, dhi)
        W = net.weights[i]
        c = 0.5 * (glo + ghi)
        r = 0.5 * (ghi - glo)
        mid = c @ W
        rad = r @ np.abs(W)
        err = (W.shape[0] + 2) * eps * (np.abs(c) @ np.abs(W) + rad) + 1e-300
        glo, ghi = mid - rad - err, mid + rad + err
    return glo, ghi


def neural_specs(sys: SystemDef, safety: ExprGraph | None, net: MlpNetwork, P, c2: float,
                 w1: float, w2: float, eps: float, opts: VerifyOptions = VerifyOptions()):
    """The three implications that make {W_N <= w2} a safe region of attraction."""
    vp = vp_graph(P)
    wn = _net_fn(net, opts.centered)
    dec = _net_decrease_fn(net, sys, opts.centered)
    box = sys.domain
    inclusion_low = ImplicationSpec((Constraint(wn, hi=w1, name="W_N <= w1"),),
                                    (Constraint(vp, hi=c2, name="V_P <= c2"),),
                                    box, opts.min_width, opts.max_boxes)
    inclusion_high = ImplicationSpec((Constraint(vp, hi=c2, name="V_P <= c2"),),
                                     (Constraint(wn, hi=w2, name="W_N <= w2"),),
                                     box, opts.min_width, opts.max_boxes)
    conc = [Constraint(dec, hi=-eps, name="W_N+ <= -eps")]
    if safety is not None:
        conc.append(Constraint(safety, hi=1.0, strict=True, name="g < 1"))
    for i, comp in enumerate(sys.components):
        conc.append(Constraint(comp, lo=box.lo[i], hi=box.hi[i], name=f"f_{i + 1}(x) in domain"))
    decrease = ImplicationSpec((Constraint(wn, lo=w1, hi=w2, name="w1 <= W_N <= w2"),),
                               tuple(conc), box, opts.min_width, opts.max_boxes)
    return inclusion_low, inclusion_high, decrease


def verify_neural(sys: SystemDef, safety: ExprGraph | None, net: MlpNetwork, cert: QuadCert,
                  c2: float, w1: float, w2: float, eps: float | None = None,
                  opts: VerifyOptions = VerifyOptions()):
    """Return the verdicts of the three neural conditions (low inclusion,
    high inclusion, decrease)."""
    eps = opts.eps if eps is None else eps
    if not 0 < w1 < w2:
        raise ValueError("need 0 < w1 < w2")
    specs = neural_specs(sys, safety, net, cert.P, c2, w1, w2, eps, opts)
    return tuple(check_implication(s) for s in specs)


def bisect_level(check, lo: float, hi: float, tol: float) -> float:
    """Largest level in [lo, hi] accepted by ``check``, to within ``tol``.

    ``check`` returns a Verdict or a bool; anything other than Certified/True
    counts as failure. ``check(lo)`` must succeed.
    """
    def ok(level):
        r = check(level)
        return r.certified if isinstance(r, Verdict) else bool(r)

    if not ok(lo):
        raise ValueError(f"lower level {lo} is not certified")
    if ok(hi):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def boundary_samples(P, c: float, count: int, seed: int = 0) -> np.ndarray:
    """Points on the ellipsoid {x'Px = c}."""
    n = P.shape[0]
    rng = np.random.default_rng(seed)
    if n == 2:
        t = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
        u = np.stack([np.cos(t), np.sin(t)], axis=1)
    else:
        u = rng.normal(size=(count, n))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
    w, V = np.linalg.eigh(P)
    inv_sqrt = (V / np.sqrt(w)) @ V.T
    return np.sqrt(c) * u @ inv_sqrt


def max_over_sublevel(fn, P, c2: float, domain: Box, opts: VerifyOptions = VerifyOptions(),
                      tol: float = 1e-4) -> float:
    """Certified upper bound of ``fn`` on {V_P <= c2} found by bisection."""
    vp = vp_graph(P)
    samples = boundary_samples(P, c2, 512)
    lo = float(np.max(fn(samples)))
    hi_lo, hi_hi = fn.bounds(domain.lo[None, :], domain.hi[None, :])
    hi = float(hi_hi[0])

    def check(level):
        spec = ImplicationSpec((Constraint(vp, hi=c2),), (Constraint(fn, hi=level),),
                               domain, opts.min_width, opts.max_boxes)
        return check_implication(spec)

    # walk up from the sampled maximum until certified
    step_ = max(tol, 1e-3 * max(1.0, abs(lo)))
    level = lo
    while not check(level).certified:
        level += step_
        step_ *= 2
        if level > hi:
            return hi
    return level


@dataclass
class NeuralCertificate:
    """Sandwich level c, levels w1 < w2 and the three verdicts at (w1, w2)."""

    c: float
    w1: float
    w2: float
    verdicts: tuple

    @property
    def status(self) -> str:
        return combine(self.verdicts).status

    @property
    def certified(self) -> bool:
        return self.status == CERTIFIED


def calibrate_neural(sys: SystemDef, safety: ExprGraph | None, net: MlpNetwork, cert: QuadCert,
                     c2: float, eps: float | None = None, opts: VerifyOptions = VerifyOptions(),
                     tol: float = 1e-3, shrink: float = 0.75, n_boundary: int = 2000):
    """Choose (w1, w2) for the neural sandwich and push w2 up by bisection.

    Any level c in (c1, c2] inherits the quadratic certificate, so c starts at
    c2 and shrinks by ``shrink`` until the decrease condition holds on the
    smallest admissible annulus. For each c: w1 = 0.95 * min of W_N on the
    ellipse boundary (lowered until W_N <= w1 implies V_P <= c) and the lower
    end of w2 is a certified maximum of W_N over the ellipse.
    """
    eps = opts.eps if eps is None else eps
    wn = _net_fn(net, opts.centered)
    vp = vp_graph(cert.P)
    top = float(_ibp(net, sys.domain.lo, sys.domain.hi)[1][0])
    c = c2
    while c > cert.c1:
        b = boundary_samples(cert.P, c, n_boundary)
        w1 = 0.95 * float(np.min(wn(b)))
        w2_lo = max_over_sublevel(wn, cert.P, c, sys.domain, opts)
        low = ImplicationSpec((Constraint(wn, hi=w1),), (Constraint(vp, hi=c),),
                              sys.domain, opts.min_width, opts.max_boxes)
        for _ in range(20):
            if w1 <= 0 or check_implication(low).certified:
                break
            w1 *= 0.9
            low = ImplicationSpec((Constraint(wn, hi=w1),), (Constraint(vp, hi=c),),
                                  sys.domain, opts.min_width, opts.max_boxes)
        if 0 < w1 < w2_lo:
            def decrease(level):
                return check_implication(
                    neural_specs(sys, safety, net, cert.P, c, w1, level, eps, opts)[2])
            if decrease(w2_lo).certified:
                w2 = bisect_level(decrease, w2_lo, max(top, w2_lo + tol), tol)
                verdicts = verify_neural(sys, safety, net, cert, c, w1, w2, eps, opts)
                return NeuralCertificate(c, w1, w2, verdicts)
        c *= shrink
    return None
