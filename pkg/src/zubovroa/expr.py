"""Scalar expression DAGs over a state vector.

A single expression definition serves four purposes: point evaluation
(batched over rows of an ``(N, n)`` array), symbolic differentiation,
natural interval extension over boxes, and serialisation to prefix notation.

Nodes are built with the usual Python operators::

    x = variables(2)
    e = x[0] - 0.1 * x[1]
    g = ExprGraph(e, n=2)
    g([1.0, 1.0])        # 0.9
    g.diff(1)([0, 0])    # -0.1
"""

from __future__ import annotations

import math
import numbers
import re

import numpy as np

from . import intervals as ia
from .intervals import Box, Interval

OPS = ("var", "const", "add", "sub", "mul", "neg", "sin", "cos", "exp", "square", "relu")
_UNARY = ("neg", "sin", "cos", "exp", "square", "relu")
_BINARY = ("add", "sub", "mul")


class Node:
    """One vertex of an expression DAG. Treat as immutable."""

    __slots__ = ("op", "args", "value")

    def __init__(self, op, args=(), value=None):
        if op not in OPS:
            raise ValueError(f"unknown op {op!r}")
        self.op = op
        self.args = tuple(args)
        self.value = value

    # -- construction helpers with constant folding -------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, k):
        if k == 2:
            return square(self)
        if isinstance(k, int) and k >= 1:
            out = self
            for _ in range(k - 1):
                out = mul(out, self)
            return out
        raise ValueError("only positive integer powers are supported")

    @property
    def is_const(self):
        return self.op == "const"

    def __repr__(self):
        return to_prefix(self)


def const(v) -> Node:
    return Node("const", value=float(v))


def var(i: int) -> Node:
    if i < 0:
        raise ValueError("variable index must be non-negative")
    return Node("var", value=int(i))


def variables(n: int) -> list[Node]:
    return [var(i) for i in range(n)]


def _wrap(a) -> Node:
    if isinstance(a, Node):
        return a
    if isinstance(a, numbers.Real):
        return const(a)
    raise TypeError(f"cannot use {type(a).__name__} in an expression")


def _is(a, v):
    return a.op == "const" and a.value == v


def add(a, b) -> Node:
    a, b = _wrap(a), _wrap(b)
    if a.is_const and b.is_const:
        return const(a.value + b.value)
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    return Node("add", (a, b))


def sub(a, b) -> Node:
    a, b = _wrap(a), _wrap(b)
    if a.is_const and b.is_const:
        return const(a.value - b.value)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    return Node("sub", (a, b))


def mul(a, b) -> Node:
    a, b = _wrap(a), _wrap(b)
    if a.is_const and b.is_const:
        return const(a.value * b.value)
    if _is(a, 0.0) or _is(b, 0.0):
        return const(0.0)
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if _is(a, -1.0):
        return neg(b)
    if _is(b, -1.0):
        return neg(a)
    return Node("mul", (a, b))


def neg(a) -> Node:
    a = _wrap(a)
    if a.is_const:
        return const(-a.value)
    if a.op == "neg":
        return a.args[0]
    return Node("neg", (a,))


def _unary(op, fn):
    def build(a) -> Node:
        a = _wrap(a)
        if a.is_const:
            return const(fn(a.value))
        return Node(op, (a,))
    build.__name__ = op
    return build


sin = _unary("sin", math.sin)
cos = _unary("cos", math.cos)
exp = _unary("exp", math.exp)
square = _unary("square", lambda v: v * v)
relu = _unary("relu", lambda v: max(v, 0.0))


def maximum(a, b) -> Node:
    """max(a, b) written as b + relu(a - b)."""
    return add(b, relu(sub(a, b)))


# ---------------------------------------------------------------------------
# graph container

def _topo(root: Node) -> list[Node]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if id(node) in seen:
            continue
        if expanded:
            seen.add(id(node))
            order.append(node)
            continue
        stack.append((node, True))
        for a in node.args:
            if id(a) not in seen:
                stack.append((a, False))
    return order


_POINT = {
    "add": np.add, "sub": np.subtract, "mul": np.multiply, "neg": np.negative,
    "sin": np.sin, "cos": np.cos, "exp": np.exp, "square": np.square,
    "relu": lambda a: np.maximum(a, 0.0),
}

_INTERVAL = {
    "add": ia.add, "sub": ia.sub, "mul": ia.mul, "neg": ia.neg, "sin": ia.sin,
    "cos": ia.cos, "exp": ia.exp, "square": ia.square, "relu": ia.relu,
}


class ExprGraph:
    """A scalar function of ``n`` variables represented by a DAG.

    Calling the graph evaluates it at a point (shape ``(n,)``) or a batch of
    points (shape ``(N, n)``).
    """

    __slots__ = ("root", "n", "_order", "_derivs")

    def __init__(self, root, n: int):
        root = _wrap(root)
        self.root = root
        self.n = int(n)
        self._order = _topo(root)
        for node in self._order:
            if node.op == "var" and node.value >= self.n:
                raise ValueError(f"variable x{node.value + 1} exceeds dimension {self.n}")
        self._derivs = {}

    @property
    def size(self) -> int:
        return len(self._order)

    def contains_op(self, op: str) -> bool:
        return any(node.op == op for node in self._order)

    @property
    def is_constant(self) -> bool:
        return not any(node.op == "var" for node in self._order)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            x = x.reshape(1)
        if x.shape[-1] != self.n:
            raise ValueError(f"expected {self.n} coordinates, got {x.shape[-1]}")
        batch_shape = x.shape[:-1]
        vals = {}
        with np.errstate(over="ignore", invalid="ignore"):
            for node in self._order:
                if node.op == "var":
                    v = x[..., node.value]
                elif node.op == "const":
                    v = np.full(batch_shape, node.value)
                elif len(node.args) == 1:
                    v = _POINT[node.op](vals[id(node.args[0])])
                else:
                    v = _POINT[node.op](vals[id(node.args[0])], vals[id(node.args[1])])
                vals[id(node)] = v
        out = vals[id(self.root)]
        return float(out) if out.ndim == 0 else out

    def bounds(self, lo, hi):
        """Natural interval extension over a batch of boxes.

        ``lo``/``hi`` have shape ``(n,)`` or ``(N, n)``; returns endpoint arrays
        of shape ``()`` or ``(N,)``.
        """
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        batch_shape = lo.shape[:-1]
        vals = {}
        with np.errstate(over="ignore", invalid="ignore"):
            for node in self._order:
                if node.op == "var":
                    v = (lo[..., node.value], hi[..., node.value])
                elif node.op == "const":
                    c = np.full(batch_shape, node.value)
                    v = (c, c)
                elif len(node.args) == 1:
                    v = _INTERVAL[node.op](*vals[id(node.args[0])])
                else:
                    v = _INTERVAL[node.op](*vals[id(node.args[0])], *vals[id(node.args[1])])
                vals[id(node)] = v
        vlo, vhi = vals[id(self.root)]
        # NaN can only come from inf - inf; fall back to the trivial enclosure
        vlo = np.where(np.isnan(vlo), -np.inf, vlo)
        vhi = np.where(np.isnan(vhi), np.inf, vhi)
        return vlo, vhi

    def diff(self, j: int) -> "ExprGraph":
        """Symbolic partial derivative with respect to variable ``j``."""
        if j not in self._derivs:
            self._derivs[j] = ExprGraph(differentiate(self.root, j), self.n)
        return self._derivs[j]

    def to_prefix(self) -> str:
        return to_prefix(self.root)

    def __repr__(self):
        return f"ExprGraph(n={self.n}, {self.to_prefix()})"


def interval_eval(graph: ExprGraph, box: Box) -> Interval:
    lo, hi = graph.bounds(box.lo, box.hi)
    return Interval(float(lo), float(hi))


def differentiate(root: Node, j: int) -> Node:
    """Return d(root)/dx_j as a new node; shared subexpressions are reused."""
    memo = {}
    for node in _topo(root):
        op = node.op
        if op == "var":
            d = const(1.0 if node.value == j else 0.0)
        elif op == "const":
            d = const(0.0)
        else:
            a = node.args[0]
            da = memo[id(a)]
            if op == "add":
                d = add(da, memo[id(node.args[1])])
            elif op == "sub":
                d = sub(da, memo[id(node.args[1])])
            elif op == "mul":
                b = node.args[1]
                d = add(mul(da, b), mul(a, memo[id(b)]))
            elif op == "neg":
                d = neg(da)
            elif op == "sin":
                d = mul(cos(a), da)
            elif op == "cos":
                d = neg(mul(sin(a), da))
            elif op == "exp":
                d = mul(node, da)
            elif op == "square":
                d = mul(mul(2.0, a), da)
            elif op == "relu":
                if _is(da, 0.0):
                    d = const(0.0)
                else:
                    raise ValueError("relu is not differentiable")
            else:  # pragma: no cover
                raise AssertionError(op)
        memo[id(node)] = d
    return memo[id(root)]


# ---------------------------------------------------------------------------
# prefix notation

def to_prefix(node: Node) -> str:
    if node.op == "var":
        return f"x{node.value + 1}"
    if node.op == "const":
        return repr(node.value)
    return "(" + " ".join([node.op] + [to_prefix(a) for a in node.args]) + ")"


class ExprParseError(ValueError):
    def __init__(self, message, position):
        super().__init__(f"{message} at character {position}")
        self.position = position


_TOKEN = re.compile(r"\s*(?:(\()|(\))|([^\s()]+))")


def parse_prefix(text: str, n: int | None = None) -> ExprGraph | Node:
    """Parse ``(op arg ...)`` notation; variables are ``x1`` .. ``xn``.

    ``add`` and ``mul`` accept two or more arguments, ``pi`` names the constant.
    Returns an ExprGraph when ``n`` is given, otherwise the root node.
    """
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip() == "":
                break
            raise ExprParseError("unexpected character", pos)
        kind = "(" if m.group(1) else ")" if m.group(2) else "atom"
        start = m.start(1) if m.group(1) else m.start(2) if m.group(2) else m.start(3)
        tokens.append((kind, m.group(3), start))
        pos = m.end()

    idx = 0

    def parse():
        nonlocal idx
        if idx >= len(tokens):
            raise ExprParseError("unexpected end of expression", len(text))
        kind, atom, where = tokens[idx]
        idx += 1
        if kind == "atom":
            if atom == "pi":
                return const(math.pi)
            if re.fullmatch(r"x[1-9][0-9]*", atom):
                return var(int(atom[1:]) - 1)
            try:
                return const(float(atom))
            except ValueError:
                raise ExprParseError(f"bad atom {atom!r}", where) from None
        if kind == ")":
            raise ExprParseError("unexpected ')'", where)
        if idx >= len(tokens) or tokens[idx][0] != "atom":
            raise ExprParseError("expected operator name", where)
        op = tokens[idx][1]
        idx += 1
        args = []
        while idx < len(tokens) and tokens[idx][0] != ")":
            args.append(parse())
        if idx >= len(tokens):
            raise ExprParseError("missing ')'", where)
        idx += 1
        if op in _UNARY:
            if len(args) != 1:
                raise ExprParseError(f"{op} takes one argument", where)
            return {"neg": neg, "sin": sin, "cos": cos, "exp": exp,
                    "square": square, "relu": relu}[op](args[0])
        if op == "sub":
            if len(args) != 2:
                raise ExprParseError("sub takes two arguments", where)
            return sub(*args)
        if op in ("add", "mul"):
            if len(args) < 2:
                raise ExprParseError(f"{op} takes at least two arguments", where)
            out = args[0]
            for a in args[1:]:
                out = add(out, a) if op == "add" else mul(out, a)
            return out
        if op == "max":
            if len(args) != 2:
                raise ExprParseError("max takes two arguments", where)
            return maximum(*args)
        raise ExprParseError(f"unknown operator {op!r}", where)

    root = parse()
    if idx != len(tokens):
        raise ExprParseError("trailing tokens", tokens[idx][2])
    return ExprGraph(root, n) if n is not None else root
