"""Adam training loops under a global backprop-iteration budget."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .losses import BoundData, LossKind, LossSettings, value_and_grad
from .topology import DEFAULT_THETA_A, Subtopology, prune


@dataclass(frozen=True)
class AdamSettings:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class BudgetExhausted(RuntimeError):
    pass


class BudgetCounter:
    """Tally of full-batch gradient steps; one step per subtopology update."""

    def __init__(self, cap: int = 90000):
        self.cap = int(cap)
        self.used = 0
        self._lock = threading.Lock()

    @property
    def remaining(self) -> int:
        return self.cap - self.used

    @property
    def exhausted(self) -> bool:
        return self.used >= self.cap

    def consume(self, n: int):
        with self._lock:
            if self.used + n > self.cap:
                raise BudgetExhausted(f"{self.used} + {n} exceeds the cap of {self.cap}")
            self.used += int(n)

    def __repr__(self):
        return f"BudgetCounter(used={self.used}, cap={self.cap})"


class TrainOutcome(NamedTuple):
    steps: int
    exhausted: bool


def adam_step(sub: Subtopology, grad, settings: AdamSettings = AdamSettings()) -> Subtopology:
    """One Adam update of the enabled weights; ``grad`` is indexed like ``sub.weights[sub.mask]``."""
    grad = np.asarray(grad, dtype=float)
    idx = np.flatnonzero(sub.mask)
    if grad.shape != idx.shape:
        raise ValueError(f"gradient has shape {grad.shape}, expected {idx.shape}")
    full = np.zeros_like(sub.weights)
    full[idx] = grad
    st = sub.adam
    st.t += 1
    st.m = settings.beta1 * st.m + (1 - settings.beta1) * full
    st.v = settings.beta2 * st.v + (1 - settings.beta2) * full * full
    mhat = st.m / (1 - settings.beta1 ** st.t)
    vhat = st.v / (1 - settings.beta2 ** st.t)
    sub.weights -= settings.lr * mhat / (np.sqrt(vhat) + settings.eps)
    sub.weights[~sub.mask] = 0.0
    sub.invalidate()
    return sub


def train(sub: Subtopology, kind, steps: int, data: BoundData, budget: BudgetCounter,
          theta_a: float = DEFAULT_THETA_A, adam: AdamSettings = AdamSettings(),
          loss: LossSettings = LossSettings()) -> TrainOutcome:
    return train_group([sub], kind, steps, data, budget, theta_a, adam, loss)


def train_group(subs, kind, steps: int, data: BoundData, budget: BudgetCounter,
                theta_a: float = DEFAULT_THETA_A, adam: AdamSettings = AdamSettings(),
                loss: LossSettings = LossSettings()) -> TrainOutcome:
    """Train several subtopologies of one master for ``steps`` Adam steps each.

    The members are updated in lockstep, but the budget is allotted to them
    in list order, exactly as if they were trained one after another. A
    member whose loss or gradient turns non-finite is restored to its
    pre-batch state and continues with half of its remaining steps. After an
    ``L_III`` batch every member is pruned with ``theta_a``.
    """
    kind = LossKind.parse(kind)
    subs = list(subs)
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    if not subs:
        return TrainOutcome(0, budget.exhausted)
    master = subs[0].master
    remaining = budget.remaining
    allot = np.zeros(len(subs), dtype=int)
    for i in range(len(subs)):
        allot[i] = min(steps, remaining)
        remaining -= allot[i]
    exhausted = bool(allot.sum() < steps * len(subs))
    n_max = int(allot.max())
    done = np.zeros(len(subs), dtype=int)
    if n_max > 0:
        W = np.stack([s.weights for s in subs])
        M = np.stack([s.mask for s in subs]).astype(float)
        S = np.stack([s.skip for s in subs])
        m = np.stack([s.adam.m for s in subs])
        v = np.stack([s.adam.v for s in subs])
        t = np.array([s.adam.t for s in subs], dtype=float)
        saved = (W.copy(), m.copy(), v.copy(), t.copy())
        b1, b2 = adam.beta1, adam.beta2
        for step in range(n_max):
            run = allot > step
            if not run.any():
                break
            losses, G = value_and_grad(master, W, S, M, data, kind, loss)
            ok = np.isfinite(losses.total) & np.isfinite(G).all(axis=1)
            if not ok.all():
                for p in np.flatnonzero(run & ~ok):
                    W[p], m[p], v[p], t[p] = (a[p] for a in saved)
                    allot[p] = step + (allot[p] - step) // 2
                run = run & ok
                G[~ok] = 0.0
                if not run.any():
                    continue
            if run.all():
                t += 1
                m *= b1
                m += (1 - b1) * G
                v *= b2
                v += (1 - b2) * G * G
                bc1 = 1 - b1 ** t
                bc2 = 1 - b2 ** t
                W -= adam.lr * (m / bc1[:, None]) / (np.sqrt(v / bc2[:, None]) + adam.eps)
            else:
                r = run[:, None]
                t = t + run
                m = np.where(r, b1 * m + (1 - b1) * G, m)
                v = np.where(r, b2 * v + (1 - b2) * G * G, v)
                bc1 = 1 - b1 ** np.maximum(t, 1)
                bc2 = 1 - b2 ** np.maximum(t, 1)
                upd = adam.lr * (m / bc1[:, None]) / (np.sqrt(v / bc2[:, None]) + adam.eps)
                W = np.where(r, W - upd, W)
            W *= M
            done += run
        for p, s in enumerate(subs):
            s.weights[:] = W[p]
            s.adam.m[:] = m[p]
            s.adam.v[:] = v[p]
            s.adam.t = int(t[p])
            s.invalidate()
    budget.consume(int(done.sum()))
    if kind is LossKind.L_III:
        for s, n in zip(subs, done):
            if n > 0:
                prune(s, theta_a)
    return TrainOutcome(int(done.sum()), exhausted)
