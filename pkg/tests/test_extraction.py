import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import empty_sub, linear_network, resistors_network, set_z
from fd_oracle import random_triple
from nesr.autodiff import predict
from nesr.extraction import (Binary, Const, Sum, Unary, Var, as_affine, complexity, extract_expression,
                             simplify, to_latex, to_text)
from nesr.topology import MasterTopology, prune


def test_resistors_expression():
    expr = simplify(extract_expression(resistors_network(), ["r1", "r2"]))
    assert to_text(expr) == "r1*r2 / (r1 + r2)"
    assert to_latex(expr) == r"\frac{r1 \cdot r2}{r1 + r2}"
    assert set(expr.variables()) == {0, 1}


def test_affine_extraction():
    expr = simplify(extract_expression(linear_network(2.0, 0.5, 3.0), ["x"]))
    coefs, bias = as_affine(expr, 1)
    assert coefs == pytest.approx([6.0]) and bias == pytest.approx(1.5)
    assert as_affine(Unary("sin", Var(0, "x")), 1) is None


def test_empty_network_is_constant_zero():
    m = MasterTopology(1, [["sin"]])
    expr = simplify(extract_expression(empty_sub(m)))
    assert expr.is_constant and expr.evaluate(np.zeros((3, 1))) == pytest.approx(0.0)


def test_unfed_unit_becomes_constant():
    m = MasterTopology(1, [["cos", "identity"]])
    s = empty_sub(m)
    set_z(s, 1, 1, 0, {0: 2.0})
    set_z(s, 2, 0, 0, {0: 0.5, 1: 1.0})
    # enabled with all-zero weights: nothing feeds it, so it outputs cos(0) = 1
    s.mask[m.unit_param_slice((1, 0))] = True
    coefs, bias = as_affine(simplify(extract_expression(s, ["x"])), 1)
    assert coefs == pytest.approx([2.0]) and bias == pytest.approx(0.5)


def test_simplify_rules():
    x = Var(0, "x")
    assert to_text(simplify(Sum(((1.0, x),), 0.0))) == "x"
    e = Sum(((2.0, x), (3.0, x), (0.004, Unary("sin", x))), 0.001)
    assert to_text(simplify(e)) == "5*x"
    folded = simplify(Binary("mul", Const(2.0), Unary("cos", Const(0.0))))
    assert folded.is_constant and folded.evaluate(np.zeros((1, 1))) == pytest.approx(2.0)
    by_const = simplify(Binary("div", x, Const(4.0)))
    assert as_affine(by_const, 1)[0] == pytest.approx([0.25])
    assert complexity(x) == 1


@given(st.integers(0, 10 ** 6))
def test_extraction_preserves_semantics(seed):
    rng = np.random.default_rng(seed)
    master, sub, _ = random_triple(rng)
    prune(sub, 0.05)
    X = rng.uniform(0.1, 3.0, (30, 2))
    raw = extract_expression(sub, ["a", "b"])
    want = predict(sub, X)
    ok = np.isfinite(want)
    assert np.allclose(raw.evaluate(X)[ok], want[ok], rtol=1e-9, atol=1e-9)
    # dropping terms below the threshold changes values by a bounded amount only
    assert np.all(np.isfinite(simplify(raw, 0.0).evaluate(X)[ok]))
    assert np.allclose(simplify(raw, 0.0).evaluate(X)[ok], want[ok], rtol=1e-9, atol=1e-9)


def test_text_rendering():
    x, t = Var(0, "v_x"), Var(1, "theta")
    e = Sum(((0.985, x), (0.473, t)), 0.0)
    assert to_text(e, precision=3) == "0.985*v_x + 0.473*theta"
    assert to_latex(e, precision=3) == r"0.985 \cdot v_{x} + 0.473 \cdot \theta"
    assert to_text(Unary("cube", x)) == "(v_x)^3"
