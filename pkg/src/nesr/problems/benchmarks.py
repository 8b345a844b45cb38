"""Benchmark problem instances generated from their reference models."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constraints import ConstraintBatch, ConstraintSpec

PROBLEMS = ("resistors", "magic", "magman", "quadcopter")

# tyre model constants
MAGIC_B, MAGIC_C, MAGIC_D, MAGIC_E = 55.56, 1.35, 0.4, 0.52
MAGIC_M, MAGIC_G = 407.75, 9.81

# magnetic force model: extremum at +-0.008 m fixes c2 = 5 * 0.008**2
MAGMAN_C2 = 5 * 0.008 ** 2
MAGMAN_PEAK = 0.3
MAGMAN_IC1 = MAGMAN_PEAK * (0.008 ** 2 + MAGMAN_C2) ** 3 / 0.008

QUAD_A, QUAD_B = 0.985, 0.473


def resistors_reference(X):
    X = np.atleast_2d(X)
    r1, r2 = X[:, 0], X[:, 1]
    return r1 * r2 / (r1 + r2)


def magic_reference(X):
    """Longitudinal tyre force normalised by the wheel load ``m * g``."""
    k = np.atleast_2d(X)[:, 0]
    b, c, d, e = MAGIC_B, MAGIC_C, MAGIC_D, MAGIC_E
    return d * np.sin(c * np.arctan(b * (1 - e) * k + e * np.arctan(b * k)))


def magman_reference(X):
    x = np.atleast_2d(X)[:, 0]
    return -MAGMAN_IC1 * x / (x * x + MAGMAN_C2) ** 3


def quadcopter_reference(X):
    X = np.atleast_2d(X)
    return QUAD_A * X[:, 0] + QUAD_B * X[:, 1]


REFERENCES = {
    "resistors": resistors_reference,
    "magic": magic_reference,
    "magman": magman_reference,
    "quadcopter": quadcopter_reference,
}


@dataclass
class ProblemInstance:
    name: str
    input_names: tuple
    X_train: np.ndarray
    y_train: np.ndarray
    X_valid: np.ndarray
    y_valid: np.ndarray
    constraint_specs: list
    constraints: ConstraintBatch | None
    X_test: np.ndarray
    y_test: np.ndarray
    master: str
    domains: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def input_dim(self) -> int:
        return self.X_train.shape[1]

    @property
    def reference(self):
        return REFERENCES.get(self.name)

    @property
    def scale(self) -> float:
        """Peak magnitude of the target over the test grid."""
        return float(np.max(np.abs(self.y_test)))

    def bound_data(self):
        from ..losses import BoundData

        return BoundData(self.X_train, self.y_train, self.X_valid, self.y_valid, self.constraints)


def _box(*intervals):
    return [list(intervals)]


def _resistors(rng, n_constraint, noise=0.02):
    lo, hi = 0.0001, 20.0
    X = rng.uniform(lo, hi, size=(500, 2))
    clean = resistors_reference(X)
    y = clean + rng.normal(0.0, noise * clean.std(), size=clean.shape)
    region = _box((0.0001, 40.0), (0.0001, 40.0))
    specs = [
        ConstraintSpec("symmetry", region, n_constraint, {"pair": [0, 1]}, name="symmetry"),
        ConstraintSpec("point_equality", region, n_constraint, {"target": "half_first", "diagonal": True},
                       name="diagonal"),
        ConstraintSpec("upper_bound", region, n_constraint, {"bound": "min_inputs"}, name="upper_bound"),
    ]
    g_int = np.linspace(0.0001, 20.0, 40)
    g_ext = np.linspace(20.0001, 40.0, 40)
    grids = [np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2) for g in (g_int, g_ext)]
    X_test = np.concatenate(grids)
    return dict(
        input_names=("r1", "r2"), X_train=X[:400], y_train=y[:400], X_valid=X[400:], y_valid=y[400:],
        specs=specs, X_test=X_test, y_test=resistors_reference(X_test), master="mastera",
        domains={"train": [[lo, hi]] * 2, "int": [[lo, hi]] * 2, "ext": [[20.0001, 40.0]] * 2},
        metadata={"noise_fraction_of_std": noise},
    )


def _magic(rng, n_constraint):
    parts = [rng.uniform(0.0, 0.02, 30), rng.uniform(0.2, 0.99, 70), rng.uniform(0.03, 0.1, 10)]
    k = np.concatenate(parts)
    rng.shuffle(k)
    X = k[:, None]
    y = magic_reference(X)
    delta = 0.005
    specs = [
        ConstraintSpec("point_equality", _box((0.0, 0.0)), n_constraint, {"target": 0.0}, name="origin"),
        ConstraintSpec("derivative_sign", _box((0.2, 0.99)), n_constraint,
                       {"sign": 1, "var": 0, "delta": delta}, name="convex_int"),
        ConstraintSpec("derivative_sign", _box((0.03, 0.1)), n_constraint,
                       {"sign": -1, "var": 0, "delta": delta}, name="concave_ext"),
    ]
    grid = np.concatenate([np.arange(0.0, 0.02 + 1e-12, 0.001), np.arange(0.03, 0.1 + 1e-12, 0.001),
                           np.arange(0.2, 0.99 + 1e-12, 0.001)])
    return dict(
        input_names=("kappa",), X_train=X[:88], y_train=y[:88], X_valid=X[88:], y_valid=y[88:],
        specs=specs, X_test=grid[:, None], y_test=magic_reference(grid[:, None]), master="masterb",
        domains={"train": [[0.0, 1.0]], "int": [[0.0, 0.02], [0.2, 0.99]], "ext": [[0.03, 0.1]]},
        metadata={"target": "force divided by m*g", "m": MAGIC_M, "g": MAGIC_G},
    )


def _magman(rng, n_constraint):
    lo, hi = -0.027, 0.027
    X = rng.uniform(lo, hi, size=(601, 1))
    y = magman_reference(X)
    delta = 1e-3
    mono = lambda a, b, direction, name: ConstraintSpec(  # noqa: E731
        "monotonic", _box((a, b)), n_constraint, {"direction": direction, "var": 0, "delta": delta}, name=name)
    specs = [
        ConstraintSpec("oddness", _box((0.0, 0.075)), n_constraint, {}, name="odd"),
        mono(-0.075, -0.008, 1, "increasing_left"),
        mono(0.008, 0.075, 1, "increasing_right"),
        mono(-0.008, 0.008, -1, "decreasing_middle"),
        ConstraintSpec("point_equality", _box((0.0, 0.0)), n_constraint, {"target": 0.0}, name="origin"),
        ConstraintSpec("decay", [[(-0.15, -0.075)], [(0.075, 0.15)]], n_constraint,
                       {"threshold": 0.01 * MAGMAN_PEAK}, name="decay"),
    ]
    grid = np.linspace(-0.075, 0.075, 301)[:, None]
    return dict(
        input_names=("x",), X_train=X[:400], y_train=y[:400], X_valid=X[400:], y_valid=y[400:],
        specs=specs, X_test=grid, y_test=magman_reference(grid), master="mastera",
        domains={"train": [[lo, hi]], "int": [[lo, hi]], "ext": [[-0.075, lo], [hi, 0.075]]},
        metadata={"synthetic": True, "c2": MAGMAN_C2, "i_c1": MAGMAN_IC1, "peak": MAGMAN_PEAK},
    )


def quadcopter_series(rng, n_pairs=498):
    """Pitch excitation and velocity response of the linear velocity model."""
    k = np.arange(n_pairs + 1)
    amps = np.array([0.05, 0.03, 0.02])
    periods = np.array([80.0, 31.0, 13.0]) * rng.uniform(0.9, 1.1, 3)
    phases = rng.uniform(0, 2 * np.pi, 3)
    theta = (amps[:, None] * np.sin(2 * np.pi * k[None, :] / periods[:, None] + phases[:, None])).sum(0)
    v = np.zeros(n_pairs + 1)
    for t in range(n_pairs):
        v[t + 1] = QUAD_A * v[t] + QUAD_B * theta[t]
    return v, theta


def _quadcopter(rng, n_constraint):
    v, theta = quadcopter_series(rng)
    X = np.stack([v[:-1], theta[:-1]], axis=1)
    y = v[1:]
    order = rng.permutation(450)
    tr, va = order[:360], order[360:]
    return dict(
        input_names=("v_x", "theta"), X_train=X[tr], y_train=y[tr], X_valid=X[va], y_valid=y[va],
        specs=[], X_test=X[450:], y_test=y[450:], master="quadcopter",
        domains={}, metadata={"synthetic": True, "a": QUAD_A, "b": QUAD_B,
                              "rms_vx": float(np.sqrt(np.mean(v ** 2)))},
    )


_BUILDERS = {"resistors": _resistors, "magic": _magic, "magman": _magman, "quadcopter": _quadcopter}


def generate_problem(name: str, seed: int = 0, constraint_samples: int = 50, **options) -> ProblemInstance:
    """Datasets, constraint samples and a test grid for a named benchmark."""
    if name not in _BUILDERS:
        raise ValueError(f"unknown problem {name!r}; choose from {', '.join(PROBLEMS)}")
    rng = np.random.default_rng(seed)
    parts = _BUILDERS[name](rng, constraint_samples, **options)
    specs = parts.pop("specs")
    batch = ConstraintBatch.generate(specs, rng) if specs else None
    meta = dict(parts.pop("metadata"), seed=seed)
    return ProblemInstance(name=name, constraint_specs=specs, constraints=batch, metadata=meta, **parts)


def rmse_int_ext(model, problem: ProblemInstance) -> float:
    """RMSE of a model (callable or subtopology) on the problem's test grid."""
    if hasattr(model, "weights"):
        from ..autodiff import predict

        pred = predict(model, problem.X_test)
    else:
        pred = np.asarray(model(problem.X_test), dtype=float).reshape(-1)
    r = np.where(np.isfinite(pred), pred - problem.y_test, 1e6)
    return float(np.sqrt(np.mean(r * r)))
