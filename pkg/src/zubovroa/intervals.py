"""Outward-rounded interval arithmetic on numpy arrays.

Every routine takes lower/upper endpoint arrays of a common shape and returns
a new ``(lo, hi)`` pair. Results are widened by one ulp in each direction so
the floating-point image of an operation is always enclosed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_TWO_PI = 2.0 * np.pi


def _down(a):
    return np.nextafter(a, -np.inf)


def _up(a):
    return np.nextafter(a, np.inf)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"invalid interval [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def __contains__(self, value) -> bool:
        return self.lo <= value <= self.hi


class Box:
    """Axis-aligned hyper-rectangle ``[lo, hi]`` in R^n."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi):
        lo = np.array(lo, dtype=float).reshape(-1)
        hi = np.array(hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ValueError("box bounds have different lengths")
        if np.any(lo > hi) or np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValueError(f"box requires lo <= hi, got {lo} and {hi}")
        lo.flags.writeable = False
        hi.flags.writeable = False
        self.lo = lo
        self.hi = hi

    @classmethod
    def symmetric(cls, radius) -> "Box":
        r = np.abs(np.asarray(radius, dtype=float))
        return cls(-r, r)

    @classmethod
    def point(cls, x) -> "Box":
        return cls(x, x)

    @property
    def n(self) -> int:
        return self.lo.size

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(self.lo <= x) and np.all(x <= self.hi))

    def contains_box(self, other: "Box") -> bool:
        return bool(np.all(self.lo <= other.lo) and np.all(other.hi <= self.hi))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(size, self.n))

    def __eq__(self, other):
        return (isinstance(other, Box) and np.array_equal(self.lo, other.lo)
                and np.array_equal(self.hi, other.hi))

    def __hash__(self):
        return hash((self.lo.tobytes(), self.hi.tobytes()))

    def __repr__(self):
        return f"Box(lo={self.lo.tolist()}, hi={self.hi.tolist()})"


# ---------------------------------------------------------------------------
# vectorised endpoint arithmetic

def add(alo, ahi, blo, bhi):
    return _down(alo + blo), _up(ahi + bhi)


def sub(alo, ahi, blo, bhi):
    return _down(alo - bhi), _up(ahi - blo)


def neg(alo, ahi):
    return -ahi, -alo


def mul(alo, ahi, blo, bhi):
    with np.errstate(invalid="ignore"):
        p = np.stack(np.broadcast_arrays(alo * blo, alo * bhi, ahi * blo, ahi * bhi))
    # 0 * inf: treat as 0, the only sensible limit for bounded factors
    p = np.where(np.isnan(p), 0.0, p)
    return _down(p.min(axis=0)), _up(p.max(axis=0))


def square(alo, ahi):
    a2, b2 = alo * alo, ahi * ahi
    hi = np.maximum(a2, b2)
    lo = np.where((alo <= 0) & (ahi >= 0), 0.0, np.minimum(a2, b2))
    return np.maximum(_down(lo), 0.0), _up(hi)


def relu(alo, ahi):
    return np.maximum(alo, 0.0), np.maximum(ahi, 0.0)


def exp(alo, ahi):
    with np.errstate(over="ignore"):
        lo, hi = np.exp(alo), np.exp(ahi)
    return np.maximum(_down(_down(lo)), 0.0), _up(_up(hi))


def tanh(alo, ahi):
    return np.maximum(_down(_down(np.tanh(alo))), -1.0), np.minimum(_up(_up(np.tanh(ahi))), 1.0)


def cos(alo, ahi):
    alo, ahi = np.broadcast_arrays(np.asarray(alo, float), np.asarray(ahi, float))
    wide = (ahi - alo) >= _TWO_PI
    ca, cb = np.cos(alo), np.cos(ahi)
    lo = np.minimum(ca, cb)
    hi = np.maximum(ca, cb)
    # maxima of cos at 2k*pi, minima at (2k+1)*pi
    with np.errstate(invalid="ignore"):
        k_max = np.ceil(alo / _TWO_PI)
        has_max = k_max * _TWO_PI <= ahi
        k_min = np.ceil((alo - np.pi) / _TWO_PI)
        has_min = k_min * _TWO_PI + np.pi <= ahi
    hi = np.where(has_max | wide, 1.0, hi)
    lo = np.where(has_min | wide, -1.0, lo)
    # slack covers cos rounding plus the argument shift done by sin()
    with np.errstate(invalid="ignore"):
        slack = 1e-15 + 8 * np.finfo(float).eps * np.maximum(np.abs(alo), np.abs(ahi))
    lo = np.maximum(_down(lo - slack), -1.0)
    hi = np.minimum(_up(hi + slack), 1.0)
    nonfinite = ~(np.isfinite(alo) & np.isfinite(ahi))
    lo = np.where(nonfinite, -1.0, lo)
    hi = np.where(nonfinite, 1.0, hi)
    return lo, hi


def sin(alo, ahi):
    half_pi = 0.5 * np.pi
    return cos(np.asarray(alo) - half_pi, np.asarray(ahi) - half_pi)


def contains(lo, hi, x) -> np.ndarray:
    return (lo <= x) & (x <= hi)
