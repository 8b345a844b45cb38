"""Fitness vectors: population objectives, memory objectives, complexity."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..losses import BoundData, LossKind, LossSettings, value_and_grad
from ..topology import Subtopology, complexity_counts


@dataclass(frozen=True)
class FitnessVector:
    rmse_valid: float
    rmse_constraint: float
    n_active_links: int
    n_active_units: int
    l_su: float
    l_cve: float
    rmse_train: float = float("nan")

    @property
    def pop_objectives(self) -> tuple:
        return (self.rmse_valid, self.rmse_constraint, float(self.n_active_links))

    @property
    def mem_objectives(self) -> tuple:
        return (self.rmse_valid, self.l_su, self.l_cve)

    @property
    def complexity(self) -> tuple:
        return (self.n_active_units, self.n_active_links)

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_stack(subs, data: BoundData, settings: LossSettings = LossSettings()):
    """Evaluate and cache the fitness of several subtopologies of one master.

    Members whose cached fitness is still valid are skipped.
    """
    subs = list(subs)
    todo = [s for s in subs if s.fitness is None]
    if todo:
        if data.n_valid == 0:
            raise ValueError("fitness needs a non-empty validation set")
        master = todo[0].master
        W = np.stack([s.weights for s in todo])
        S = np.stack([s.skip for s in todo])
        M = np.stack([s.mask for s in todo])
        losses, _ = value_and_grad(master, W, S, M, data, LossKind.L_III, settings, need_grad=False)
        units, links = complexity_counts(master, W, S)
        for p, s in enumerate(todo):
            s.fitness = FitnessVector(
                rmse_valid=float(losses.rmse_valid[p]),
                rmse_constraint=float(losses.l_cve[p]),
                n_active_links=int(links[p]),
                n_active_units=int(units[p]),
                l_su=float(losses.l_su[p]),
                l_cve=float(losses.l_cve[p]),
                rmse_train=float(losses.l_tr[p]),
            )
    return [s.fitness for s in subs]


def evaluate_fitness(sub: Subtopology, data: BoundData, settings: LossSettings = LossSettings()) -> FitnessVector:
    sub.fitness = None
    return evaluate_stack([sub], data, settings)[0]


def objective_matrix(items, objectives: str = "pop") -> np.ndarray:
    """Stack objective tuples of fitness vectors (or fitness-carrying subtopologies)."""
    rows = []
    for it in items:
        fv = it.fitness if isinstance(it, Subtopology) else it
        rows.append(fv.pop_objectives if objectives == "pop" else fv.mem_objectives)
    return np.asarray(rows, dtype=float).reshape(len(rows), -1)
