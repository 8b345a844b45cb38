"""Finite-difference gradient oracle for the composite losses.

Central differences at steps ``h`` and ``h/2`` are combined by Richardson
extrapolation, which cancels the O(h^2) truncation term. A coordinate is
only compared when all four perturbed points share the base point's
*branch signature*: the side of every piecewise switch in the loss (divide
denominators against the threshold, constraint hinges, the regulariser knot,
link activity and non-finite outputs). Everywhere else the loss is smooth,
so any disagreement there is a real gradient bug.

Rounding limits how small a gradient the difference quotient can resolve:
with loss values of size ``L`` the extrapolated quotient carries an error of
up to ``3 * ULPS * eps * L / h``. Relative errors are therefore taken against
the larger of the gradient and the magnitude at which that rounding bound
alone would reach the tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nesr._kernels import compiled
from nesr.autodiff import forward_stack
from nesr.losses import BoundData, LossSettings, value_and_grad
from nesr.problems.constraints import ConstraintBatch, ConstraintSpec
from nesr.topology import MasterTopology, activity_masks, init_subtopology, preset_master

STEP = 1e-4
REL_TOL = 1e-4
FLOOR = 1e-7
SING_REL = 1e-2
ULPS = 4  # rounding allowance per evaluated loss value


def signature(master, W, S, data: BoundData, settings: LossSettings):
    """Branch matrix ``(P, k)`` and the divide denominators ``(P, n_div, N)``."""
    tr = forward_stack(master, W, S, data.X_all, settings.theta_div, W != 0)
    zg = [z for _, _, z in compiled(master).divides]
    den = tr.z[:, zg, :]
    parts = [tr.bad, den > settings.theta_div]
    parts.append(activity_masks(master, W, S)[3])
    parts.append(np.abs(W) >= settings.reg_knot)
    if data.constraints is not None:
        c = data.constraints
        U = tr.output[:, data.constraint_slice] @ c.matrix.T - c.targets
        parts += [U > 0, np.abs(U) > c.deltas]
    return np.concatenate([p.reshape(W.shape[0], -1) for p in parts], axis=1), den


@dataclass
class Comparison:
    index: np.ndarray  # flat weight indices compared
    analytic: np.ndarray
    numeric: np.ndarray
    skipped: int
    noise: np.ndarray | float = 0.0  # rounding bound of the numeric quotient

    @property
    def rel_error(self) -> np.ndarray:
        scale = np.maximum(np.maximum(np.abs(self.analytic), np.abs(self.numeric)),
                           np.maximum(FLOOR, self.noise / REL_TOL))
        return np.abs(self.analytic - self.numeric) / scale


KIND_TERMS = {"L_I": ("l_tr", "l_su"), "L_II": ("l_tr", "l_su", "l_cve"),
              "L_III": ("l_tr", "l_su", "l_cve", "l_reg")}


def compare(master, sub, data: BoundData, kinds=("L_I", "L_II", "L_III"), settings=LossSettings(),
            h=STEP) -> dict:
    """Analytic versus extrapolated numeric gradient, per loss kind."""
    W = sub.weights[None]
    S = sub.skip[None]
    M = sub.mask[None].astype(float)
    idx = np.flatnonzero(sub.mask)
    n = idx.size
    P = np.repeat(W, 4 * n, axis=0)
    rows = np.arange(n)
    for k, step in enumerate((h, -h, h / 2, -h / 2)):
        P[4 * rows + k, idx] += step
    Sp = np.repeat(S, 4 * n, axis=0)
    terms = value_and_grad(master, P, Sp, np.repeat(M, 4 * n, axis=0), data, "L_III", settings,
                           need_grad=False)[0]

    base, den0 = signature(master, W, S, data, settings)
    sig, den = signature(master, P, Sp, data, settings)
    smooth = (sig.reshape(n, 4, -1) == base[None]).all(axis=(1, 2))
    # near-singular: a step moves some live denominator by more than SING_REL of itself
    live = den0[0] > settings.theta_div
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(live, np.abs(den - den0) / np.abs(den0), 0.0)
    smooth &= rel.reshape(n, -1).max(axis=1, initial=0.0) <= SING_REL
    # protect against perturbations that land numerically on the knot itself
    smooth &= np.abs(np.abs(W[0, idx]) - settings.reg_knot) > 2 * h

    out = {}
    for kind in kinds:
        _, G = value_and_grad(master, W, S, M, data, kind, settings)
        L = sum(getattr(terms, t) for t in KIND_TERMS[kind]).reshape(n, 4)
        d1 = (L[:, 0] - L[:, 1]) / (2 * h)
        d2 = (L[:, 2] - L[:, 3]) / h
        fd = (4 * d2 - d1) / 3
        noise = 3 * ULPS * np.finfo(float).eps * np.abs(L).max(axis=1) / h
        out[kind] = Comparison(idx[smooth], G[0, idx[smooth]], fd[smooth], int((~smooth).sum()),
                               noise[smooth])
    return out


# ---------------------------------------------------------------------------
# Random problem triples
# ---------------------------------------------------------------------------

WIDE = MasterTopology(2, [["cos", "cube", "arctan", "divide"], ["sin", "multiply", "divide", "identity"]])


def random_specs():
    box = [[(0.1, 3.0), (0.1, 3.0)]]
    return [
        ConstraintSpec("symmetry", box, sample_count=8),
        ConstraintSpec("point_equality", box, sample_count=8, params={"target": "half_first", "diagonal": True}),
        ConstraintSpec("upper_bound", box, sample_count=8),
        ConstraintSpec("monotonic", box, sample_count=8, params={"var": 0, "delta": 0.05}),
        ConstraintSpec("oddness", [[(-2.0, 2.0), (-2.0, 2.0)]], sample_count=8),
        ConstraintSpec("derivative_sign", box, sample_count=8, params={"var": 1, "delta": 0.1, "sign": -1}),
        ConstraintSpec("decay", box, sample_count=8, params={"threshold": 0.3}),
    ]


def random_triple(rng):
    """``(master, subtopology, bound data)`` with sparse weights and random skips."""
    master = [preset_master("mastera", 2), preset_master("masterb", 2), WIDE][int(rng.integers(3))]
    sub = init_subtopology(master, rng)
    drop = rng.random(master.n_params) < 0.3
    sub.weights[drop] = 0.0
    sub.mask[drop] = False
    sub.skip[:] = rng.random(master.n_skip) < 0.5
    X = rng.uniform(0.1, 3.0, (20, 2))
    y = X[:, 0] * X[:, 1] / (X[:, 0] + X[:, 1])
    batch = ConstraintBatch.generate(random_specs(), rng)
    return master, sub, BoundData(X[:15], y[:15], X[15:], y[15:], batch)
