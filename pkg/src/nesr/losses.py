"""Loss terms and the three composite training losses.

``L_I = L_tr + L_su``, ``L_II = L_I + L_cve`` and ``L_III = L_II + L_reg``.
All four terms are always computed (so breakdowns can be logged); only the
ones selected by the loss kind enter the total and the gradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from ._kernels import compiled
from .autodiff import DEFAULT_THETA_DIV, backward_stack, forward_stack
from .problems.constraints import PENALTY, ConstraintBatch
from .topology import Subtopology, activity_masks


class LossKind(str, Enum):
    L_I = "L_I"
    L_II = "L_II"
    L_III = "L_III"

    @property
    def uses_constraints(self) -> bool:
        return self is not LossKind.L_I

    @property
    def uses_regularization(self) -> bool:
        return self is LossKind.L_III

    @classmethod
    def parse(cls, value) -> "LossKind":
        if isinstance(value, LossKind):
            return value
        key = str(value).upper().replace("_", "")
        if key.startswith("L"):
            key = key[1:]
        return cls("L_" + key)


@dataclass(frozen=True)
class LossSettings:
    theta_div: float = DEFAULT_THETA_DIV
    reg_knot: float = 0.01
    reg_weight: float = 1e-3
    penalty: float = PENALTY


@dataclass
class LossBreakdown:
    l_tr: float
    l_su: float
    l_cve: float
    l_reg: float
    total: float
    rmse_valid: float = float("nan")  # filled in when a validation set is bound


class BoundData:
    """Training, validation and constraint data stacked for one forward pass.

    Rows of ``X_all`` are ordered train, validation, constraint points; the
    singularity loss is measured on all of them.
    """

    def __init__(self, X_train, y_train, X_valid=None, y_valid=None,
                 constraints: ConstraintBatch | None = None):
        self.X_train = np.atleast_2d(np.asarray(X_train, dtype=float))
        self.y_train = np.asarray(y_train, dtype=float).reshape(-1)
        if self.X_train.shape[0] == 0:
            raise ValueError("empty training set")
        if self.X_train.shape[0] != self.y_train.shape[0]:
            raise ValueError("X_train and y_train lengths differ")
        d = self.X_train.shape[1]
        if X_valid is None:
            self.X_valid, self.y_valid = np.zeros((0, d)), np.zeros(0)
        else:
            self.X_valid = np.atleast_2d(np.asarray(X_valid, dtype=float))
            self.y_valid = np.asarray(y_valid, dtype=float).reshape(-1)
        if constraints is not None and constraints.n_samples == 0:
            constraints = None
        self.constraints = constraints
        parts = [self.X_train, self.X_valid]
        if constraints is not None:
            if constraints.points.shape[1] != d:
                raise ValueError("constraint points do not match the input dimension")
            parts.append(constraints.points)
        self.X_all = np.concatenate(parts, axis=0)
        self.n_train = self.X_train.shape[0]
        self.n_valid = self.X_valid.shape[0]
        self.train_slice = slice(0, self.n_train)
        self.valid_slice = slice(self.n_train, self.n_train + self.n_valid)
        self.constraint_slice = slice(self.n_train + self.n_valid, self.X_all.shape[0])

    @property
    def input_dim(self) -> int:
        return self.X_train.shape[1]


# ---------------------------------------------------------------------------
# Smoothed L0.5
# ---------------------------------------------------------------------------


def l_half(w, a: float = 0.01):
    """Smoothed L0.5 penalty: ``sqrt|w|`` outside ``(-a, a)``, a quartic blend inside."""
    w = np.asarray(w, dtype=float)
    aw = np.abs(w)
    inner = -w ** 4 / (8 * a ** 3) + 3 * w ** 2 / (4 * a) + 3 * a / 8
    with np.errstate(invalid="ignore"):
        return np.where(aw >= a, np.sqrt(aw), np.sqrt(inner))


def l_half_grad(w, a: float = 0.01):
    w = np.asarray(w, dtype=float)
    aw = np.abs(w)
    inner = -w ** 4 / (8 * a ** 3) + 3 * w ** 2 / (4 * a) + 3 * a / 8
    d_inner = -w ** 3 / (2 * a ** 3) + 3 * w / (2 * a)
    with np.errstate(divide="ignore", invalid="ignore"):
        outer = np.sign(w) / (2 * np.sqrt(aw))
        return np.where(aw >= a, outer, d_inner / (2 * np.sqrt(inner)))


# ---------------------------------------------------------------------------
# Stack evaluation
# ---------------------------------------------------------------------------


def _rmse_with_grad(pred, target, bad, penalty):
    r = pred - target
    if bad is not None and bad.any():
        r = np.where(bad, penalty, r)
    L = np.sqrt(np.mean(r * r, axis=1))
    safe = np.where(L > 0, L, 1.0)
    d = r / (r.shape[1] * safe[:, None])
    if bad is not None and bad.any():
        d = np.where(bad, 0.0, d)
    d[L == 0] = 0.0
    return L, d


def value_and_grad(master, W, S, M, data: BoundData, kind, settings: LossSettings = LossSettings(),
                   need_grad: bool = True):
    """Loss breakdown per stack row and, optionally, the masked gradient.

    Returns ``(LossBreakdown of (P,) arrays, G or None)``.
    """
    kind = LossKind.parse(kind)
    P = W.shape[0]
    tr = forward_stack(master, W, S, data.X_all, settings.theta_div, M)
    out, bad = tr.output, tr.bad
    any_bad = bad.any()
    d_out = np.zeros_like(out) if need_grad else None

    ts = data.train_slice
    l_tr, d_tr = _rmse_with_grad(out[:, ts], data.y_train, bad[:, ts] if any_bad else None, settings.penalty)
    if need_grad:
        d_out[:, ts] = d_tr

    _, active_units, _, active_links = activity_masks(master, W, S)

    # singularity: RMS of penalties over (samples x active divide units)
    N = data.X_all.shape[0]
    sq = np.zeros(P)
    count = np.zeros(P)
    div_terms = []
    for li, pos, zg in compiled(master).divides:
        act = active_units[li][:, pos].astype(float)  # (P,)
        with np.errstate(invalid="ignore"):
            pen = np.maximum(settings.theta_div - tr.z[:, zg, :], 0.0)
        finite = np.isfinite(pen)
        pen = np.where(finite, pen, settings.penalty)
        sq += act * (pen * pen).sum(axis=1)
        count += N * act
        div_terms.append((pen, act, finite))
    l_su = np.sqrt(np.divide(sq, count, out=np.zeros(P), where=count > 0))

    d_div = None
    if need_grad and div_terms:
        d_div = np.empty((P, len(div_terms), N))
        denom = np.where(l_su > 0, count * l_su, 1.0)
        for k, (pen, act, finite) in enumerate(div_terms):
            g = -pen * (act / denom)[:, None]
            g = np.where(finite, g, 0.0)
            g[l_su == 0] = 0.0
            d_div[:, k] = g

    if data.constraints is not None:
        cs = data.constraint_slice
        use_c = need_grad and kind.uses_constraints
        l_cve, d_c = data.constraints.loss_and_grad(out[:, cs], bad[:, cs] if any_bad else None, use_c)
        if use_c:
            d_out[:, cs] += d_c
    else:
        l_cve = np.zeros(P)

    a = settings.reg_knot
    Wa = np.where(active_links, W, 0.0)
    l_reg = settings.reg_weight * np.where(active_links, l_half(Wa, a), 0.0).sum(axis=1)

    if data.n_valid:
        vs = data.valid_slice
        rmse_valid, _ = _rmse_with_grad(out[:, vs], data.y_valid, bad[:, vs] if any_bad else None,
                                        settings.penalty)
    else:
        rmse_valid = np.full(P, np.nan)

    total = l_tr + l_su
    if kind.uses_constraints:
        total = total + l_cve
    if kind.uses_regularization:
        total = total + l_reg
    losses = LossBreakdown(l_tr, l_su, l_cve, l_reg, total, rmse_valid)
    if not need_grad:
        return losses, None

    G = backward_stack(master, W, S, tr, d_out, d_div, settings.theta_div)
    if kind.uses_regularization:
        G += settings.reg_weight * np.where(active_links, l_half_grad(Wa, a), 0.0)
    G *= M
    return losses, G


# ---------------------------------------------------------------------------
# Single-subtopology terms
# ---------------------------------------------------------------------------


def _one(sub: Subtopology, data: BoundData, kind=LossKind.L_III, settings=LossSettings()):
    losses, _ = value_and_grad(sub.master, sub.weights[None], sub.skip[None], sub.mask[None],
                               data, kind, settings, need_grad=False)
    return LossBreakdown(*(float(getattr(losses, f)[0])
                           for f in ("l_tr", "l_su", "l_cve", "l_reg", "total", "rmse_valid")))


def training_loss(sub: Subtopology, X, y, settings: LossSettings = LossSettings()) -> float:
    """RMSE of the model on a labelled set."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("empty dataset")
    tr = forward_stack(sub.master, sub.weights[None], sub.skip[None], X, settings.theta_div, sub.mask[None])
    L, _ = _rmse_with_grad(tr.output, np.asarray(y, dtype=float).reshape(-1), tr.bad, settings.penalty)
    return float(L[0])


def singularity_loss(sub: Subtopology, X_all, settings: LossSettings = LossSettings()) -> float:
    X_all = np.atleast_2d(np.asarray(X_all, dtype=float))
    data = BoundData(X_all, np.zeros(X_all.shape[0]))
    return _one(sub, data, LossKind.L_I, settings).l_su


def constraint_loss(sub: Subtopology, constraints: ConstraintBatch,
                    settings: LossSettings = LossSettings()) -> float:
    if constraints is None or constraints.n_samples == 0:
        return 0.0
    tr = forward_stack(sub.master, sub.weights[None], sub.skip[None], constraints.points,
                       settings.theta_div, sub.mask[None])
    L, _ = constraints.loss_and_grad(tr.output, tr.bad, need_grad=False)
    return float(L[0])


def regularization_loss(sub: Subtopology, settings: LossSettings = LossSettings()) -> float:
    _, _, _, active = activity_masks(sub.master, sub.weights[None], sub.skip[None])
    w = sub.weights[active[0]]
    return float(settings.reg_weight * l_half(w, settings.reg_knot).sum())


def composite_loss(kind, sub: Subtopology, data: BoundData,
                   settings: LossSettings = LossSettings()) -> LossBreakdown:
    return _one(sub, data, LossKind.parse(kind), settings)
