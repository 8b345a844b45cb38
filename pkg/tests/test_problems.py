import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nesr.problems.benchmarks import (MAGMAN_C2, PROBLEMS, REFERENCES, generate_problem,
                                      magic_reference, magman_reference, resistors_reference,
                                      rmse_int_ext)
from nesr.problems.constraints import (ConstraintBatch, ConstraintSpec, constraint_samples,
                                       constraint_violation)

COUNTS = {"resistors": (400, 100), "magic": (88, 22), "magman": (400, 201), "quadcopter": (360, 90)}


@pytest.mark.parametrize("name", PROBLEMS)
def test_dataset_counts(name):
    p = generate_problem(name, 0)
    assert (len(p.y_train), len(p.y_valid)) == COUNTS[name]
    if name == "quadcopter":
        assert len(p.y_test) == 48 and p.metadata["synthetic"]


@pytest.mark.parametrize("name", PROBLEMS)
def test_reference_is_consistent(name):
    p = generate_problem(name, 3)
    ref = REFERENCES[name]
    if p.constraints is not None:
        F = ref(p.constraints.points)[None]
        assert p.constraints.loss_and_grad(F, None, False)[0][0] < 1e-9
    assert rmse_int_ext(ref, p) == 0.0


def test_generation_is_seeded():
    a, b, c = (generate_problem("resistors", s) for s in (5, 5, 6))
    assert np.array_equal(a.X_train, b.X_train) and np.array_equal(a.constraints.points, b.constraints.points)
    assert not np.array_equal(a.X_train, c.X_train)
    with pytest.raises(ValueError):
        generate_problem("pendulum")


def test_reference_examples():
    assert resistors_reference([[1.0, 1.0]])[0] == 0.5
    assert magic_reference([[0.0]])[0] == 0.0


@given(st.floats(-0.2, 0.2))
def test_magman_is_odd(x):
    assert magman_reference([[x]])[0] == -magman_reference([[-x]])[0]


def test_magman_extremum_location():
    h = 1e-7
    for x0 in (-0.008, 0.008):
        d = (magman_reference([[x0 + h]])[0] - magman_reference([[x0 - h]])[0]) / (2 * h)
        assert abs(d) < 1e-6 * abs(magman_reference([[x0]])[0]) / 0.008
    assert MAGMAN_C2 == pytest.approx(3.2e-4)


def test_resistors_noise_level():
    p = generate_problem("resistors", 0)
    clean = resistors_reference(p.X_train)
    assert np.std(p.y_train - clean) == pytest.approx(0.02 * np.std(clean), rel=0.2)


def test_rmse_int_ext_examples():
    p = generate_problem("magic", 0)
    zero = rmse_int_ext(lambda X: np.zeros(len(X)), p)
    assert zero == pytest.approx(np.sqrt(np.mean(p.y_test ** 2)))
    shifted = rmse_int_ext(lambda X: magic_reference(X) + 0.25, p)
    assert shifted == pytest.approx(0.25)


BOX = [[(0.0, 1.0), (2.0, 3.0)]]


def test_symmetry_samples():
    S = constraint_samples(ConstraintSpec("symmetry", BOX, 5), np.random.default_rng(0))
    assert S.shape == (5, 2, 2)
    assert np.array_equal(S[:, 1], S[:, 0, ::-1])


def test_monotonic_samples_stay_inside():
    spec = ConstraintSpec("monotonic", [[(0.008, 0.075)]], 200, {"var": 0, "delta": 1e-3})
    S = constraint_samples(spec, np.random.default_rng(0))
    assert np.allclose(S[:, 1, 0] - S[:, 0, 0], 1e-3)
    assert S.min() >= 0.008 and S.max() <= 0.075


def test_oddness_and_derivative_samples():
    rng = np.random.default_rng(1)
    S = constraint_samples(ConstraintSpec("oddness", [[(0.0, 0.1)]], 4), rng)
    assert np.array_equal(S[:, 1], -S[:, 0])
    D = constraint_samples(ConstraintSpec("derivative_sign", [[(0.0, 1.0)]], 4, {"delta": 0.1}), rng)
    assert np.allclose(D[:, 1] - D[:, 0], 0.1) and np.allclose(D[:, 2] - D[:, 1], 0.1)


def test_invalid_specs():
    with pytest.raises(ValueError):
        ConstraintSpec("convexity", BOX)
    with pytest.raises(ValueError):
        ConstraintSpec("symmetry", [[(1.0, 0.0)]])
    with pytest.raises(ValueError):
        constraint_samples(ConstraintSpec("monotonic", [[(0.0, 0.001)]], 3, {"delta": 0.01}),
                           np.random.default_rng(0))


def test_violation_values():
    rng = np.random.default_rng(2)
    up = ConstraintSpec("upper_bound", BOX, 6)
    S = constraint_samples(up, rng)
    v = constraint_violation(lambda X: X.min(axis=1) + 0.5, up, S)
    assert np.allclose(v, 0.5)
    v = constraint_violation(lambda X: X.min(axis=1) - 0.5, up, S)
    assert np.all(v == 0.0)
    sym = ConstraintSpec("symmetry", BOX, 6)
    v = constraint_violation(lambda X: X[:, 0], sym, constraint_samples(sym, rng))
    assert v.shape == (6,) and np.all(v > 0)
    dec = ConstraintSpec("decay", [[(1.0, 2.0)]], 5, {"threshold": 0.1})
    v = constraint_violation(lambda X: np.full(len(X), -0.3), dec, constraint_samples(dec, rng))
    assert np.allclose(v, 0.2)


def test_violation_non_finite_is_penalised():
    spec = ConstraintSpec("point_equality", [[(0.0, 1.0)]], 3)
    v = constraint_violation(lambda X: np.full(len(X), np.nan), spec,
                             constraint_samples(spec, np.random.default_rng(0)))
    assert np.all(v == 1e6)


@given(st.integers(0, 10 ** 6))
def test_batch_matches_per_spec_violations(seed):
    rng = np.random.default_rng(seed)
    specs = [ConstraintSpec("symmetry", BOX, 4), ConstraintSpec("upper_bound", BOX, 3),
             ConstraintSpec("derivative_sign", BOX, 3, {"var": 1, "delta": 0.2, "sign": -1}),
             ConstraintSpec("decay", BOX, 2, {"threshold": 0.3})]
    batch = ConstraintBatch.generate(specs, rng)
    model = lambda X: np.sin(3 * X[:, 0]) + X[:, 1] ** 2  # noqa: E731
    V, _ = batch.violations(model(batch.points)[None])
    direct = np.concatenate([constraint_violation(model, s, S) for s, S in zip(batch.specs, batch.samples)])
    assert np.allclose(V[0], direct, rtol=1e-12, atol=1e-12)
    assert np.all(V >= 0)


def test_batch_roundtrip():
    batch = ConstraintBatch.generate([ConstraintSpec("oddness", [[(0.0, 1.0)]], 4)], np.random.default_rng(0))
    again = ConstraintBatch.from_dict(batch.to_dict())
    assert np.array_equal(again.points, batch.points) and np.array_equal(again.matrix, batch.matrix)
