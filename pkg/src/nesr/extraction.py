"""Symbolic expressions read off trained subtopologies.

``extract_expression`` unfolds the network from the output unit through
active units; copy units with skip 1 are transparent and units that no input
reaches are evaluated once and folded into biases as constants, so the tree
evaluates to exactly what the network computes. ``simplify`` then does plain
syntactic clean-up.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import DEFAULT_THETA_DIV, forward_stack
from .topology import DEFAULT_THETA_A, ActivationKind, Subtopology, activity_masks

K = ActivationKind

_UNARY = {
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "arctan": np.arctan,
    "cube": lambda v: v * v * v,
}


class Expr:
    """Base node. Subclasses implement ``evaluate(X)`` on an ``(N, d)`` array."""

    def evaluate(self, X) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.broadcast_to(self.evaluate(X), (X.shape[0],)).astype(float)

    @property
    def is_constant(self) -> bool:
        return not any(True for _ in self.variables())

    def variables(self):
        for c in self.children():
            yield from c.variables()

    def children(self):
        return ()

    def key(self):
        """Hashable structural identity (used to merge like terms)."""
        raise NotImplementedError

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True, eq=False)
class Const(Expr):
    value: float

    def evaluate(self, X):
        return np.full(X.shape[0], self.value)

    def key(self):
        return ("c", self.value)


@dataclass(frozen=True, eq=False)
class Var(Expr):
    index: int
    name: str

    def evaluate(self, X):
        return X[:, self.index]

    def variables(self):
        yield self.index

    def key(self):
        return ("x", self.index)


@dataclass(frozen=True, eq=False)
class Unary(Expr):
    op: str
    arg: Expr

    def evaluate(self, X):
        return _UNARY[self.op](self.arg.evaluate(X))

    def children(self):
        return (self.arg,)

    def key(self):
        return (self.op, self.arg.key())


@dataclass(frozen=True, eq=False)
class Binary(Expr):
    op: str  # "mul" or "div"
    left: Expr
    right: Expr
    theta: float = DEFAULT_THETA_DIV

    def evaluate(self, X):
        a = self.left.evaluate(X)
        b = self.right.evaluate(X)
        if self.op == "mul":
            return a * b
        b = np.broadcast_to(b, np.broadcast(a, b).shape)
        ok = b > self.theta
        return np.where(ok, a * np.divide(1.0, b, out=np.zeros(b.shape), where=ok), 0.0)

    def children(self):
        return (self.left, self.right)

    def key(self):
        return (self.op, self.left.key(), self.right.key())


@dataclass(frozen=True, eq=False)
class Sum(Expr):
    """``bias + sum(coef * term)``."""

    terms: tuple  # of (coef, Expr)
    bias: float = 0.0

    def evaluate(self, X):
        out = np.full(X.shape[0], self.bias)
        for c, t in self.terms:
            out = out + c * t.evaluate(X)
        return out

    def children(self):
        return tuple(t for _, t in self.terms)

    def key(self):
        return ("sum", self.bias, tuple((c, t.key()) for c, t in self.terms))


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------


def extract_expression(sub: Subtopology, input_names=None, theta_div: float = DEFAULT_THETA_DIV) -> Expr:
    master = sub.master
    names = list(input_names) if input_names is not None else [f"x{i + 1}" for i in range(master.input_dim)]
    fed, _, _, _ = activity_masks(master, sub.weights[None], sub.skip[None])
    # values of units no input reaches do not depend on the input
    trace = forward_stack(master, sub.weights[None], sub.skip[None], np.zeros((1, master.input_dim)),
                          theta_div, sub.mask[None])
    const_y = [trace.layer_y(master, li)[0, :, 0] for li in range(len(master.layers))]
    memo = {}

    def source(li, j):
        """Expression for output ``j`` of layer ``li - 1`` (the inputs when li == 0)."""
        if li == 0:
            return Var(j, names[j])
        return unit(li - 1, j)

    def unit(li, pos):
        if (li, pos) in memo:
            return memo[(li, pos)]
        L = master.layers[li]
        if not fed[li][0, pos]:
            out = Const(float(const_y[li][pos]))
        elif pos >= L.n_learn:
            skip = sub.skip[L.skip_offset + pos - L.n_learn]
            inner = source(li, pos - L.n_learn)
            out = inner if skip == 1.0 else Sum(((float(skip), inner),), 0.0)
        else:
            rows = sub.layer_weights(L.index)
            kind = L.kinds[pos]
            zs = []
            for r in range(kind.arity):
                row = rows[L.z_offsets[pos] + r]
                bias = float(row[-1])
                terms = []
                for j in range(L.n_in):
                    w = float(row[j])
                    if w == 0.0:
                        continue
                    src_fed = True if li == 0 else bool(fed[li - 1][0, j])
                    if src_fed:
                        terms.append((w, source(li, j)))
                    else:
                        bias += w * float(const_y[li - 1][j])
                zs.append(Sum(tuple(terms), bias))
            if kind is K.IDENTITY:
                out = zs[0]
            elif kind is K.MULTIPLY:
                out = Binary("mul", zs[0], zs[1])
            elif kind is K.DIVIDE:
                out = Binary("div", zs[0], zs[1], theta_div)
            else:
                out = Unary(kind.value, zs[0])
        memo[(li, pos)] = out
        return out

    return unit(len(master.layers) - 1, 0)


# ---------------------------------------------------------------------------
# Simplification
# ---------------------------------------------------------------------------


def _value(expr: Expr) -> float:
    return float(expr.evaluate(np.zeros((1, 1)))[0])


def _as_sum(expr: Expr) -> Sum:
    if isinstance(expr, Sum):
        return expr
    if isinstance(expr, Const):
        return Sum((), expr.value)
    return Sum(((1.0, expr),), 0.0)


def _collapse(s: Sum) -> Expr:
    if not s.terms:
        return Const(s.bias)
    if len(s.terms) == 1 and s.bias == 0.0 and s.terms[0][0] == 1.0:
        return s.terms[0][1]
    return s


def simplify(expr: Expr, eps: float = DEFAULT_THETA_A) -> Expr:
    """Fold constants, flatten nested sums, merge like terms, drop |coef| < eps."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if isinstance(expr, (Const, Var)):
        return expr
    if expr.is_constant:
        return Const(_value(expr))
    if isinstance(expr, Unary):
        return Unary(expr.op, simplify(expr.arg, eps))
    if isinstance(expr, Binary):
        a, b = simplify(expr.left, eps), simplify(expr.right, eps)
        if expr.op == "mul":
            if isinstance(a, Const) or isinstance(b, Const):
                c, other = (a.value, b) if isinstance(a, Const) else (b.value, a)
                return simplify(Sum(((c, other),), 0.0), eps)
            return Binary("mul", a, b)
        if isinstance(b, Const) and b.value > expr.theta:
            return simplify(Sum(((1.0 / b.value, a),), 0.0), eps)
        return Binary("div", a, b, expr.theta)
    if isinstance(expr, Sum):
        bias = expr.bias
        merged: dict = {}
        order = []
        for c, t in expr.terms:
            inner = _as_sum(simplify(t, eps))
            bias += c * inner.bias
            for c2, t2 in inner.terms:
                k = t2.key()
                if k not in merged:
                    merged[k] = [0.0, t2]
                    order.append(k)
                merged[k][0] += c * c2
        terms = tuple((merged[k][0], merged[k][1]) for k in order if abs(merged[k][0]) >= eps
                      and merged[k][0] != 0.0)
        if abs(bias) < eps:
            bias = 0.0
        return _collapse(Sum(terms, bias))
    raise TypeError(f"unknown expression node {type(expr).__name__}")


def as_affine(expr: Expr, input_dim: int):
    """``(coefficients, bias)`` when ``expr`` is affine in the inputs, else None."""
    s = _as_sum(simplify(expr, 0.0))
    coefs = np.zeros(input_dim)
    for c, t in s.terms:
        if not isinstance(t, Var):
            return None
        coefs[t.index] += c
    return coefs, s.bias


def complexity(expr: Expr) -> int:
    """Node count of the tree."""
    n = 1
    if isinstance(expr, Sum):
        n += len(expr.terms)
    for c in expr.children():
        n += complexity(c)
    return n


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def _num(v: float, precision: int) -> str:
    return f"{v:.{precision}g}"


def to_text(expr: Expr, precision: int = 6, mul: str = "*") -> str:
    def go(e, wrap=False):
        if isinstance(e, Const):
            s = _num(e.value, precision)
            return f"({s})" if wrap and e.value < 0 else s
        if isinstance(e, Var):
            return e.name
        if isinstance(e, Unary):
            if e.op == "cube":
                return f"({go(e.arg)})^3"
            return f"{e.op}({go(e.arg)})"
        if isinstance(e, Binary):
            op = mul if e.op == "mul" else "/"
            return f"{go(e.left, True)}{op}{go(e.right, True)}" if e.op == "mul" \
                else f"{go(e.left, True)} / {go(e.right, True)}"
        parts = []
        for c, t in e.terms:
            body = go(t, True)
            if c == 1.0:
                parts.append(("+", body))
            elif c == -1.0:
                parts.append(("-", body))
            else:
                parts.append(("-" if c < 0 else "+", f"{_num(abs(c), precision)}{mul}{body}"))
        if e.bias != 0.0 or not parts:
            parts.append(("-" if e.bias < 0 else "+", _num(abs(e.bias), precision)))
        text = ("-" if parts[0][0] == "-" else "") + parts[0][1]
        for sign, body in parts[1:]:
            text += f" {sign} {body}"
        return f"({text})" if wrap and len(parts) > 1 else text

    return go(expr)


_LATEX_FUN = {"sin": r"\sin", "cos": r"\cos", "tanh": r"\tanh", "arctan": r"\arctan"}


def _latex_name(name: str) -> str:
    greek = {"theta": r"\theta", "kappa": r"\kappa"}
    if name in greek:
        return greek[name]
    if "_" in name:
        base, sub = name.split("_", 1)
        return f"{base}_{{{sub}}}"
    return name


def to_latex(expr: Expr, precision: int = 4) -> str:
    def go(e, wrap=False):
        if isinstance(e, Const):
            return _num(e.value, precision)
        if isinstance(e, Var):
            return _latex_name(e.name)
        if isinstance(e, Unary):
            if e.op == "cube":
                return rf"\left({go(e.arg)}\right)^{{3}}"
            return rf"{_LATEX_FUN[e.op]}\left({go(e.arg)}\right)"
        if isinstance(e, Binary):
            if e.op == "div":
                return rf"\frac{{{go(e.left)}}}{{{go(e.right)}}}"
            return rf"{go(e.left, True)} \cdot {go(e.right, True)}"
        parts = []
        for c, t in e.terms:
            body = go(t, True)
            mag = "" if abs(c) == 1.0 else rf"{_num(abs(c), precision)} \cdot "
            parts.append(("-" if c < 0 else "+", mag + body))
        if e.bias != 0.0 or not parts:
            parts.append(("-" if e.bias < 0 else "+", _num(abs(e.bias), precision)))
        text = ("-" if parts[0][0] == "-" else "") + parts[0][1]
        for sign, body in parts[1:]:
            text += f" {sign} {body}"
        return rf"\left({text}\right)" if wrap and len(parts) > 1 else text

    return go(expr)
