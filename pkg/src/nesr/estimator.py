"""scikit-learn style front end for the search."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_random_state, check_X_y

from .autodiff import predict
from .config import RunConfig
from .evolution import run_search
from .extraction import extract_expression, simplify
from .losses import BoundData
from .problems.constraints import ConstraintBatch
from .topology import build_master, preset_master


class SymbolicRegressor(RegressorMixin, BaseEstimator):
    """Neuro-evolutionary symbolic regressor.

    Parameters mirror the run configuration keys. ``constraints`` is an
    optional list of :class:`~nesr.problems.constraints.ConstraintSpec`
    describing prior knowledge; their samples are drawn at fit time.
    A fraction ``validation_fraction`` of the rows is held out for the
    validation objective.

    After fitting, ``model_`` holds the selected subtopology and
    ``expression_`` its simplified symbolic form.
    """

    def __init__(self, master="mastera", constraints=None, popsize=10, stages=3, generations=20,
                 n_newborn=10, n_tune=100, n_finetune=50, budget=90000, theta_a=0.01,
                 reg_weight=1e-3, validation_fraction=0.2, constraint_samples=50,
                 input_names=None, random_state=None):
        self.master = master
        self.constraints = constraints
        self.popsize = popsize
        self.stages = stages
        self.generations = generations
        self.n_newborn = n_newborn
        self.n_tune = n_tune
        self.n_finetune = n_finetune
        self.budget = budget
        self.theta_a = theta_a
        self.reg_weight = reg_weight
        self.validation_fraction = validation_fraction
        self.constraint_samples = constraint_samples
        self.input_names = input_names
        self.random_state = random_state

    def _config(self, seed):
        return RunConfig(problem="custom", popsize=self.popsize, stages=self.stages,
                         generations=self.generations, n_newborn=self.n_newborn, n_tune=self.n_tune,
                         n_finetune=self.n_finetune, budget=self.budget, theta_a=self.theta_a,
                         reg_weight=self.reg_weight, constraint_samples=self.constraint_samples,
                         seed=seed)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")
        rng = check_random_state(self.random_state)
        seed = int(rng.randint(0, 2 ** 31 - 1))
        gen = np.random.default_rng(seed)

        n = X.shape[0]
        n_valid = int(round(self.validation_fraction * n))
        if n - n_valid < 1:
            raise ValueError("not enough samples left for training")
        order = gen.permutation(n)
        tr, va = order[n_valid:], order[:n_valid]

        batch = None
        if self.constraints:
            batch = ConstraintBatch.generate(list(self.constraints), gen)
        data = BoundData(X[tr], y[tr], X[va] if n_valid else None, y[va] if n_valid else None, batch)

        if isinstance(self.master, str):
            master = preset_master(self.master, X.shape[1])
        else:
            master = build_master(self.master)
        if master.input_dim != X.shape[1]:
            raise ValueError(f"master topology expects {master.input_dim} inputs, got {X.shape[1]}")

        result = run_search(master, data, self._config(seed), rng=gen)
        self.model_ = result.best
        self.archive_ = result.overall_best
        self.budget_used_ = result.budget_used
        self.n_features_in_ = X.shape[1]
        names = self.input_names or [f"x{i + 1}" for i in range(X.shape[1])]
        self.expression_ = simplify(extract_expression(self.model_, names), self.theta_a)
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return predict(self.model_, X)

    @property
    def complexity_(self):
        check_is_fitted(self, "model_")
        f = self.model_.fitness
        return (f.n_active_units, f.n_active_links)
