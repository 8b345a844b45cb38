import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import linear_network
from fd_oracle import random_triple
from nesr.autodiff import gradients
from nesr.losses import BoundData, composite_loss
from nesr.optimizer import AdamSettings, BudgetCounter, BudgetExhausted, adam_step, train, train_group


def _adam_reference(w, grads, lr=0.01, b1=0.9, b2=0.999, eps=1e-8):
    m = np.zeros_like(w)
    v = np.zeros_like(w)
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w = w - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    return w


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.integers(1, 6))
def test_adam_step_matches_reference(g, n):
    s = linear_network(0.3, 0.0, -0.7)
    w0 = s.weights[s.mask].copy()
    grads = [np.array(g) * (k + 1) for k in range(n)]
    for grad in grads:
        adam_step(s, grad)
    assert np.allclose(s.weights[s.mask], _adam_reference(w0, grads), rtol=1e-12, atol=1e-15)
    assert s.adam.t == n


def test_first_adam_step_is_signed_lr():
    s = linear_network(0.3, 0.0, -0.7)
    w0 = s.weights[s.mask].copy()
    adam_step(s, np.array([2.0, -0.5]))
    assert s.weights[s.mask] - w0 == pytest.approx([-0.01, 0.01], rel=1e-6)
    with pytest.raises(ValueError):
        adam_step(s, np.zeros(3))


def test_budget_counter():
    b = BudgetCounter(10)
    b.consume(7)
    assert b.remaining == 3 and not b.exhausted
    with pytest.raises(BudgetExhausted):
        b.consume(4)
    b.consume(3)
    assert b.exhausted


def _line_data(rng):
    X = rng.uniform(-1, 1, (40, 1))
    return BoundData(X, 1.5 * X[:, 0] + 0.2)


def test_training_reduces_loss(rng):
    s = linear_network(0.3, 0.05, 0.5)
    data = _line_data(rng)
    before = composite_loss("L_I", s, data).total
    out = train(s, "L_I", 300, data, BudgetCounter())
    assert out.steps == 300 and not out.exhausted
    assert composite_loss("L_I", s, data).total < 0.1 * before


def test_training_stops_at_budget(rng):
    subs = [linear_network(0.3, 0.1, 0.5) for _ in range(3)]
    budget = BudgetCounter(25)
    out = train_group(subs, "L_I", 10, _line_data(rng), budget)
    assert out.steps == 25 and out.exhausted and budget.exhausted
    assert [s.adam.t for s in subs] == [10, 10, 5]


def test_group_equals_sequential(rng):
    data = _line_data(rng)
    a = [linear_network(w, 0.1, 0.5) for w in (0.3, -0.8, 1.2)]
    b = [s.copy() for s in a]
    train_group(a, "L_III", 40, data, BudgetCounter())
    for s in b:
        train(s, "L_III", 40, data, BudgetCounter())
    for x, y in zip(a, b):
        assert np.allclose(x.weights, y.weights, rtol=1e-12, atol=1e-15)
        assert np.array_equal(x.mask, y.mask)


def test_l_iii_training_prunes(rng):
    s = linear_network(0.3, 0.005, 0.5)
    # one Adam step moves the bias by at most lr, leaving it below the threshold
    train(s, "L_III", 1, _line_data(rng), BudgetCounter(), theta_a=0.02)
    assert not s.mask[s.master.layer(1).param_offset + 1]
    assert s.weights[s.master.layer(1).param_offset + 1] == 0.0


def test_masked_weights_stay_zero(rng):
    master, sub, data = random_triple(rng)
    train(sub, "L_II", 20, data, BudgetCounter())
    assert (sub.weights[~sub.mask] == 0).all()
    g = gradients(sub, "L_II", data)
    assert g.shape == (int(sub.mask.sum()),)


def test_adam_settings_are_used(rng):
    s = linear_network(0.3, 0.0, 0.5)
    w0 = s.weights[s.mask].copy()
    train(s, "L_I", 1, _line_data(rng), BudgetCounter(), adam=AdamSettings(lr=0.1))
    assert np.abs(s.weights[s.mask] - w0) == pytest.approx([0.1, 0.1], rel=1e-6)
