"""Prior-knowledge constraints: specs, synthetic samples and violations.

Every constraint kind reduces to the same shape: a sample is a handful of
input points, the model outputs at those points are combined linearly,
``u = sum_k c_k f(p_k) - t``, and a nonnegative link turns ``u`` into the
violation (``|u|``, ``max(0, u)`` or ``max(0, |u| - delta)``). Compiling all
samples of a problem into one dense coefficient matrix lets the training
loop evaluate every violation, and its gradient, with two matrix products.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KINDS = ("symmetry", "point_equality", "upper_bound", "monotonic", "oddness",
         "derivative_sign", "decay")

LINK_ABS, LINK_RELU, LINK_EXCESS = 0, 1, 2

PENALTY = 1e6


def _target_zero(P):
    return np.zeros(len(P))


def _target_half_first(P):
    return 0.5 * P[:, 0]


def _bound_min_inputs(P):
    return P.min(axis=1)


TARGETS = {
    "zero": _target_zero,
    "half_first": _target_half_first,
    "min_inputs": _bound_min_inputs,
}


@dataclass
class ConstraintSpec:
    """One piece of prior knowledge.

    ``region`` is a list of boxes, each a list of ``(lo, hi)`` per input;
    samples pick a box uniformly and then a point uniformly inside it.
    ``params`` carries the kind-specific settings:

    - symmetry: ``pair`` (indices of the swapped inputs, default (0, 1))
    - point_equality: ``target`` (name in TARGETS or a float), ``diagonal``
    - upper_bound: ``bound`` (name in TARGETS or a float)
    - monotonic: ``direction`` (+1 or -1), ``var``, ``delta``
    - derivative_sign: ``sign`` (+1 convex, -1 concave), ``var``, ``delta``
    - decay: ``threshold``
    """

    kind: str
    region: list
    sample_count: int = 50
    params: dict = field(default_factory=dict)
    weight: float = 1.0
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        self.region = [[(float(lo), float(hi)) for lo, hi in box] for box in self.region]
        if not self.region or any(hi < lo for box in self.region for lo, hi in box):
            raise ValueError("empty constraint region")

    @property
    def input_dim(self) -> int:
        return len(self.region[0])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "region": [[list(iv) for iv in box] for box in self.region],
                "sample_count": self.sample_count, "params": dict(self.params),
                "weight": self.weight, "name": self.name}

    @classmethod
    def from_dict(cls, doc: dict) -> "ConstraintSpec":
        return cls(doc["kind"], doc["region"], doc.get("sample_count", 50),
                   dict(doc.get("params", {})), doc.get("weight", 1.0), doc.get("name", ""))


def _draw_points(spec: ConstraintSpec, n: int, rng, shrink=None) -> np.ndarray:
    """Uniform points in the spec region; ``shrink`` trims (var, lo, hi) margins."""
    d = spec.input_dim
    out = np.empty((n, d))
    boxes = rng.integers(len(spec.region), size=n) if len(spec.region) > 1 else np.zeros(n, dtype=int)
    for b, box in enumerate(spec.region):
        rows = np.flatnonzero(boxes == b)
        if rows.size == 0:
            continue
        for v, (lo, hi) in enumerate(box):
            if shrink is not None and shrink[0] == v:
                lo, hi = lo + shrink[1], hi - shrink[2]
                if hi < lo:
                    raise ValueError("constraint region narrower than the finite-difference step")
            out[rows, v] = rng.uniform(lo, hi, size=rows.size) if hi > lo else lo
    return out


def constraint_samples(spec: ConstraintSpec, rng) -> np.ndarray:
    """Synthetic samples shaped ``(n, k, d)``: ``k`` points per sample."""
    n = int(spec.sample_count)
    p = spec.params
    if spec.kind == "symmetry":
        i, j = p.get("pair", (0, 1))
        a = _draw_points(spec, n, rng)
        b = a.copy()
        b[:, [i, j]] = a[:, [j, i]]
        return np.stack([a, b], axis=1)
    if spec.kind == "point_equality":
        a = _draw_points(spec, n, rng)
        if p.get("diagonal", False):
            a[:] = a[:, :1]
        return a[:, None, :]
    if spec.kind in ("upper_bound", "decay"):
        return _draw_points(spec, n, rng)[:, None, :]
    if spec.kind == "monotonic":
        var, delta = p.get("var", 0), float(p["delta"])
        a = _draw_points(spec, n, rng, shrink=(var, 0.0, delta))
        b = a.copy()
        b[:, var] += delta
        return np.stack([a, b], axis=1)
    if spec.kind == "oddness":
        a = _draw_points(spec, n, rng)
        return np.stack([a, -a], axis=1)
    if spec.kind == "derivative_sign":
        var, delta = p.get("var", 0), float(p["delta"])
        mid = _draw_points(spec, n, rng, shrink=(var, delta, delta))
        lo, hi = mid.copy(), mid.copy()
        lo[:, var] -= delta
        hi[:, var] += delta
        return np.stack([lo, mid, hi], axis=1)
    raise ValueError(f"unknown constraint kind {spec.kind!r}")


def _resolve(value, P):
    if isinstance(value, str):
        if value not in TARGETS:
            raise ValueError(f"unknown constraint target {value!r}")
        return TARGETS[value](P)
    return np.full(len(P), float(value))


def _linear_form(spec: ConstraintSpec, samples: np.ndarray):
    """(coefficients (n, k), targets (n,), link code, delta) for a sample set."""
    n = samples.shape[0]
    p = spec.params
    if spec.kind == "symmetry":
        return np.tile([1.0, -1.0], (n, 1)), np.zeros(n), LINK_ABS, 0.0
    if spec.kind == "point_equality":
        return np.ones((n, 1)), _resolve(p.get("target", 0.0), samples[:, 0]), LINK_ABS, 0.0
    if spec.kind == "upper_bound":
        return np.ones((n, 1)), _resolve(p.get("bound", "min_inputs"), samples[:, 0]), LINK_RELU, 0.0
    if spec.kind == "monotonic":
        sign = 1.0 if p.get("direction", 1) > 0 else -1.0
        return np.tile([sign, -sign], (n, 1)), np.zeros(n), LINK_RELU, 0.0
    if spec.kind == "oddness":
        return np.ones((n, 2)), np.zeros(n), LINK_ABS, 0.0
    if spec.kind == "derivative_sign":
        h2 = float(p["delta"]) ** 2
        sign = 1.0 if p.get("sign", 1) > 0 else -1.0
        return np.tile([-sign / h2, 2 * sign / h2, -sign / h2], (n, 1)), np.zeros(n), LINK_RELU, 0.0
    if spec.kind == "decay":
        return np.ones((n, 1)), np.zeros(n), LINK_EXCESS, float(p["threshold"])
    raise ValueError(f"unknown constraint kind {spec.kind!r}")


def _link(u, code, delta):
    """Violation and its derivative w.r.t. ``u`` for per-sample link codes."""
    au = np.abs(u)
    v = np.where(code == LINK_ABS, au,
                 np.where(code == LINK_RELU, np.maximum(u, 0.0), np.maximum(au - delta, 0.0)))
    dv = np.where(code == LINK_ABS, np.sign(u),
                  np.where(code == LINK_RELU, (u > 0).astype(float),
                           np.sign(u) * (au > delta)))
    return v, dv


def constraint_violation(model, spec: ConstraintSpec, samples: np.ndarray) -> np.ndarray:
    """Per-sample violation (>= 0) of a callable model on a sample set."""
    n, k, d = samples.shape
    f = np.asarray(model(samples.reshape(n * k, d)), dtype=float).reshape(n, k)
    coef, t, code, delta = _linear_form(spec, samples)
    u = (coef * np.where(np.isfinite(f), f, 0.0)).sum(axis=1) - t
    v, _ = _link(u, np.full(n, code), np.full(n, delta))
    v[~np.isfinite(f).all(axis=1)] = PENALTY
    return v


class ConstraintBatch:
    """All constraint samples of a problem compiled into one linear system."""

    def __init__(self, items):
        items = list(items)
        self.specs = [spec for spec, _ in items]
        self.samples = [np.asarray(s, dtype=float) for _, s in items]
        pts, rows = [], []
        m0 = 0
        coefs, targets, codes, deltas, weights, owner = [], [], [], [], [], []
        for ci, (spec, S) in enumerate(zip(self.specs, self.samples)):
            n, k, d = S.shape
            coef, t, code, delta = _linear_form(spec, S)
            pts.append(S.reshape(n * k, d))
            rows.append(m0 + np.arange(n * k).reshape(n, k))
            m0 += n * k
            coefs.append(coef)
            targets.append(t)
            codes.append(np.full(n, code))
            deltas.append(np.full(n, delta))
            weights.append(np.full(n, float(spec.weight)))
            owner.append(np.full(n, ci))
        n_samples = sum(len(t) for t in targets)
        self.points = np.concatenate(pts) if pts else np.zeros((0, 0))
        self.matrix = np.zeros((n_samples, m0))
        s0 = 0
        for coef, idx in zip(coefs, rows):
            n = coef.shape[0]
            np.put_along_axis(self.matrix[s0:s0 + n], idx, coef, axis=1)
            s0 += n
        self.targets = np.concatenate(targets) if targets else np.zeros(0)
        self.codes = np.concatenate(codes) if codes else np.zeros(0, dtype=int)
        self.deltas = np.concatenate(deltas) if deltas else np.zeros(0)
        self.weights = np.concatenate(weights) if weights else np.zeros(0)
        self.owner = np.concatenate(owner) if owner else np.zeros(0, dtype=int)
        self._touch = (self.matrix != 0.0).astype(float)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def n_samples(self) -> int:
        return self.targets.shape[0]

    def __len__(self):
        return self.n_samples

    def violations(self, F: np.ndarray, bad: np.ndarray | None = None):
        """Violations ``(P, S)`` and dV/dU for outputs ``F`` at the points ``(P, M)``."""
        U = F @ self.matrix.T - self.targets
        V, dV = _link(U, self.codes, self.deltas)
        if bad is not None and bad.any():
            hit = (bad.astype(float) @ self._touch.T) > 0
            V = np.where(hit, PENALTY, V)
            dV = np.where(hit, 0.0, dV)
        return V, dV

    def loss_and_grad(self, F: np.ndarray, bad=None, need_grad=True):
        """Pooled weighted RMS violation per stack row, and dL/dF."""
        V, dV = self.violations(F, bad)
        wsum = self.weights.sum()
        L = np.sqrt((self.weights * V * V).sum(axis=1) / wsum)
        if not need_grad:
            return L, None
        safe = np.where(L > 0, L, 1.0)
        dU = self.weights * V * dV / (wsum * safe[:, None])
        dU[L == 0] = 0.0
        return L, dU @ self.matrix

    def per_constraint(self, F: np.ndarray) -> np.ndarray:
        """RMS violation of each spec separately, ``(P, n_specs)``."""
        V, _ = self.violations(F)
        out = np.zeros((F.shape[0], len(self.specs)))
        for ci in range(len(self.specs)):
            sel = self.owner == ci
            out[:, ci] = np.sqrt(np.mean(V[:, sel] ** 2, axis=1))
        return out

    def to_dict(self) -> dict:
        return {"constraints": [dict(spec.to_dict(), samples=S.tolist())
                                for spec, S in zip(self.specs, self.samples)]}

    @classmethod
    def from_dict(cls, doc: dict) -> "ConstraintBatch":
        items = [(ConstraintSpec.from_dict(c), np.asarray(c["samples"], dtype=float))
                 for c in doc["constraints"]]
        return cls(items)

    @classmethod
    def generate(cls, specs, rng) -> "ConstraintBatch":
        return cls((spec, constraint_samples(spec, rng)) for spec in specs)
