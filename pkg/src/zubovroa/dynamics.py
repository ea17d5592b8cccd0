"""Discrete-time systems ``x_{k+1} = f(x_k)`` defined by expression graphs."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import expr as ex
from .expr import ExprGraph
from .intervals import Box


class DynamicsError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SystemDef:
    """An n-dimensional map together with its training box and safety function.

    ``safety`` is g_X with the safe set {g < 1}; ``None`` means no state
    constraints.
    """

    components: tuple
    dt: float
    domain: Box
    safety: ExprGraph | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        comps = tuple(c if isinstance(c, ExprGraph) else ExprGraph(c, len(self.components))
                      for c in self.components)
        object.__setattr__(self, "components", comps)
        n = len(comps)
        if n == 0:
            raise DynamicsError("system needs at least one component")
        if any(c.n != n for c in comps):
            raise DynamicsError("component graphs must all have dimension n")
        if self.domain.n != n:
            raise DynamicsError("domain box dimension does not match n")
        if not np.all(self.domain.lo < 0) or not np.all(self.domain.hi > 0):
            raise DynamicsError("origin must lie in the interior of the domain box")
        if self.safety is not None and self.safety.n != n:
            raise DynamicsError("safety function has the wrong dimension")
        f0 = np.array([c(np.zeros(n)) for c in comps])
        if np.max(np.abs(f0)) > 1e-12:
            raise DynamicsError(f"origin is not an equilibrium: f(0) = {f0}")

    @property
    def n(self) -> int:
        return len(self.components)

    @cached_property
    def jacobian_graphs(self) -> tuple:
        for c in self.components:
            if c.contains_op("relu"):
                raise DynamicsError("relu is not allowed in the transition map")
        return tuple(tuple(c.diff(j) for j in range(self.n)) for c in self.components)

    @cached_property
    def hessian_graphs(self) -> tuple:
        """hessian_graphs[i][j][k] = d^2 f_i / dx_j dx_k."""
        jac = self.jacobian_graphs
        return tuple(tuple(tuple(jac[i][j].diff(k) for k in range(self.n))
                           for j in range(self.n)) for i in range(self.n))

    def default_escape_threshold(self) -> float:
        return 1e3 * max(np.max(np.abs(self.domain.lo)), np.max(np.abs(self.domain.hi)))


def step(sys: SystemDef, x) -> np.ndarray:
    """Apply the map once. Accepts a single state or a batch ``(N, n)``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != sys.n:
        raise DynamicsError(f"state has {x.shape[-1]} entries, system has {sys.n}")
    return np.stack([np.asarray(c(x)) for c in sys.components], axis=-1)


def image_bounds(sys: SystemDef, lo, hi):
    """Interval enclosure of f over a batch of boxes; arrays of shape (N, n)."""
    parts = [c.bounds(lo, hi) for c in sys.components]
    return (np.stack([p[0] for p in parts], axis=-1),
            np.stack([p[1] for p in parts], axis=-1))


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    diverged: bool
    diverged_at: int | None = None

    def __len__(self):
        return len(self.states)


def trajectory(sys: SystemDef, x0, K: int, escape: float | None = None) -> Trajectory:
    """Iterate the map ``K`` times from ``x0``.

    Stops early and flags divergence when the max-norm exceeds ``escape`` or a
    non-finite value appears.
    """
    if K < 0:
        raise ValueError("K must be non-negative")
    if escape is None:
        escape = sys.default_escape_threshold()
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (sys.n,):
        raise DynamicsError(f"initial state must have shape ({sys.n},)")
    states = [x]
    for k in range(1, K + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            x = step(sys, x)
        states.append(x)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > escape:
            return Trajectory(np.array(states), True, k)
    return Trajectory(np.array(states), False, None)


def jacobian_at(sys: SystemDef, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (sys.n,):
        raise DynamicsError(f"state must have shape ({sys.n},)")
    return np.array([[g(x) for g in row] for row in sys.jacobian_graphs])


def hessian_eta_bound(sys: SystemDef, box: Box) -> np.ndarray:
    """Componentwise envelope eta with |f(x) - A x| <= |x|^2 / 2 * eta on ``box``.

    eta_i sums the interval magnitude bounds of every second partial of f_i.
    """
    if box.n != sys.n:
        raise DynamicsError("box dimension does not match system")
    hess = sys.hessian_graphs
    eta = np.zeros(sys.n)
    for i in range(sys.n):
        total = 0.0
        for j in range(sys.n):
            for k in range(sys.n):
                lo, hi = hess[i][j][k].bounds(box.lo, box.hi)
                total += max(abs(float(lo)), abs(float(hi)))
        eta[i] = np.nextafter(total, np.inf) if total > 0 else 0.0
    return eta


def certify_below(graph: ExprGraph, box: Box, level: float, max_boxes: int = 200_000,
                  min_width: float = 1e-9) -> bool:
    """True if sup of ``graph`` over ``box`` is provably below ``level``.

    Uses bisection on the widest side until every piece has an interval upper
    bound below ``level``. False means a piece could not be discharged (either
    a real violation or budget exhaustion).
    """
    lo = box.lo[None, :].copy()
    hi = box.hi[None, :].copy()
    used = 0
    while len(lo):
        used += len(lo)
        if used > max_boxes:
            return False
        _, vhi = graph.bounds(lo, hi)
        keep = ~(vhi < level)
        lo, hi = lo[keep], hi[keep]
        if not len(lo):
            return True
        mid = 0.5 * (lo + hi)
        if np.any(graph(mid) >= level):
            return False
        width = hi - lo
        if np.any(width.max(axis=1) < min_width):
            return False
        d = np.argmax(width, axis=1)
        rows = np.arange(len(lo))
        lo2, hi2 = lo.copy(), hi.copy()
        hi[rows, d] = mid[rows, d]
        lo2[rows, d] = mid[rows, d]
        lo = np.concatenate([lo, lo2])
        hi = np.concatenate([hi, hi2])
    return True


# ---------------------------------------------------------------------------
# built-in benchmarks

def van_der_pol(dt: float = 0.1) -> SystemDef:
    """Euler-discretised reversed Van der Pol oscillator with a disc obstacle."""
    x1, x2 = ex.variables(2)
    f1 = x1 - dt * x2
    f2 = x2 + dt * (x1 + (ex.square(x1) - 1.0) * x2)
    # obstacle: disc of radius 1/4 centred at (1, 1)
    g = 1.0 + 0.25 - (ex.square(x1 - 1.0) + ex.square(x2 - 1.0)) * (1.0 / 0.25)
    return SystemDef((ExprGraph(f1, 2), ExprGraph(f2, 2)), dt,
                     Box([-2.5, -3.5], [2.5, 3.5]), ExprGraph(g, 2), name="vdp")


def two_machine(dt: float = 0.1) -> SystemDef:
    """Euler-discretised two-machine power system with two disc obstacles."""
    x1, x2 = ex.variables(2)
    s = np.sin(np.pi / 3)
    f1 = x1 + dt * x2
    f2 = x2 - dt * (0.5 * x2 + ex.sin(x1 + np.pi / 3) - s)
    r2 = (1.0 / 8.0) ** 2
    ga = 1.0 + r2 - (ex.square(x1 - 0.25) + ex.square(x2 - 0.25))
    gb = 1.0 + r2 - (ex.square(x1 - 0.25) + ex.square(x2 + 0.25))
    return SystemDef((ExprGraph(f1, 2), ExprGraph(f2, 2)), dt,
                     Box([-1.0, -0.5], [1.0, 0.5]), ExprGraph(ex.maximum(ga, gb), 2),
                     name="two_machine")


def power4d(dt: float = 0.05, a1=1.0, a2=1.0, b1=0.5, b2=0.5, d1=0.4, d2=0.5) -> SystemDef:
    """Euler-discretised 4-state two-generator bus system, no obstacles."""
    x1, x2, x3, x4 = ex.variables(4)
    r2 = -a1 * ex.sin(x1) - b1 * ex.sin(x1 - x3) - d1 * x2
    r4 = -a2 * ex.sin(x3) - b2 * ex.sin(x3 - x1) - d2 * x4
    comps = [x1 + dt * x2, x2 + dt * r2, x3 + dt * x4, x4 + dt * r4]
    return SystemDef(tuple(ExprGraph(c, 4) for c in comps), dt,
                     Box([-3.5] * 4, [3.5] * 4), None, name="power4d")


BUILTINS = {"vdp": van_der_pol, "two_machine": two_machine, "power4d": power4d}


def builtin(name: str) -> SystemDef:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise DynamicsError(f"unknown system {name!r}; choose from {sorted(BUILTINS)}") from None


# ---------------------------------------------------------------------------
# system definition files
#
#   # comment
#   name  vdp_copy
#   n     2
#   dt    0.1
#   lo    -2.5 -3.5
#   hi    2.5 3.5
#   f1    (sub x1 (mul 0.1 x2))
#   f2    (add x2 (mul 0.1 (add x1 (mul (sub (square x1) 1) x2))))
#   g     (sub 1.25 (mul 4 (add (square (sub x1 1)) (square (sub x2 1)))))

def parse_system(text: str) -> SystemDef:
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, rest = line.partition(" ")
        if key in entries:
            raise DynamicsError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = (lineno, rest.strip())

    def need(key):
        if key not in entries:
            raise DynamicsError(f"missing required key {key!r}")
        return entries.pop(key)

    try:
        ln, v = need("n")
        n = int(v)
        ln, v = need("dt")
        dt = float(v)
        ln, v = need("lo")
        lo = [float(t) for t in v.split()]
        ln, v = need("hi")
        hi = [float(t) for t in v.split()]
    except ValueError as err:
        raise DynamicsError(f"line {ln}: {err}") from None
    name = entries.pop("name", (0, "custom"))[1]
    comps = []
    for i in range(1, n + 1):
        ln, v = need(f"f{i}")
        try:
            comps.append(ex.parse_prefix(v, n))
        except ValueError as err:
            raise DynamicsError(f"line {ln}: {err}") from None
    safety = None
    if "g" in entries:
        ln, v = entries.pop("g")
        try:
            safety = ex.parse_prefix(v, n)
        except ValueError as err:
            raise DynamicsError(f"line {ln}: {err}") from None
    if entries:
        key, (ln, _) = next(iter(entries.items()))
        raise DynamicsError(f"line {ln}: unknown key {key!r}")
    if len(lo) != n or len(hi) != n:
        raise DynamicsError("lo/hi must have n entries")
    return SystemDef(tuple(comps), dt, Box(lo, hi), safety, name=name)


def format_system(sys: SystemDef) -> str:
    lines = [f"name {sys.name}", f"n {sys.n}", f"dt {sys.dt!r}",
             "lo " + " ".join(repr(float(v)) for v in sys.domain.lo),
             "hi " + " ".join(repr(float(v)) for v in sys.domain.hi)]
    lines += [f"f{i + 1} {c.to_prefix()}" for i, c in enumerate(sys.components)]
    if sys.safety is not None:
        lines.append(f"g {sys.safety.to_prefix()}")
    return "\n".join(lines) + "\n"


def load_system(spec: str) -> SystemDef:
    """Built-in name or path to a system definition file."""
    if spec in BUILTINS:
        return builtin(spec)
    path = Path(spec)
    if not path.exists():
        raise DynamicsError(f"{spec!r} is neither a built-in system nor a file")
    return parse_system(path.read_text())
