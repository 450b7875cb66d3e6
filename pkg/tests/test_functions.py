import numpy as np
import pytest
import sympy as sp

from szasz_lab.errors import ExpressionError
from szasz_lab.expressions import parse_expression, point_symbols, rho_symbols
from szasz_lab.lattice_operators import szasz_classical
from szasz_lab.functions import (
    TestFunction, constant, cosine_window, from_expression, gaussian_bump, is_polynomial, monomial,
    parse_function, polynomial_degree, smooth_bump,
)


def test_parse_expression_grammar():
    t = sp.Symbol("t", real=True)
    assert parse_expression("t^2 + 3*t − 1", [t]) == t**2 + 3 * t - 1
    assert parse_expression("exp(log(t))", [t]) == t
    assert parse_expression("pi", [t]) == sp.pi
    for bad in ("", "t +", "__import__('os')", "foo(t)", "u + 1", "t.real", "f(t)"):
        with pytest.raises(ExpressionError):
            parse_expression(bad, [t])


def test_symbol_naming():
    assert [str(s) for s in rho_symbols(1)] == ["rho"]
    assert [str(s) for s in rho_symbols(2)] == ["rho1", "rho2"]
    assert [str(s) for s in point_symbols(2)] == ["s", "t"]
    assert [str(s) for s in point_symbols(3)] == ["t1", "t2", "t3"]


def test_monomial_and_derivatives():
    f = monomial(3)
    assert f(2.0) == 8.0
    assert f.derivative(1, 2.0) == 12.0
    assert f.derivative(3, 5.0) == 6.0
    assert f.derivative(4, 5.0) == 0.0
    with pytest.raises(ValueError):
        f.derivative(5, 1.0)


def test_vectorised_evaluation_shapes():
    f = from_expression("s*t", 2)
    pts = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.allclose(f(pts), [2.0, 12.0])
    assert np.allclose(f.hessian(pts)[0], [[0, 1], [1, 0]])
    g = monomial(2)
    assert g(np.array([1.0, 2.0, 3.0])).shape == (3,)


def test_support_zeroes_outside():
    b = smooth_bump(center=1.0, radius=0.5)
    assert b(2.0) == 0.0 and b(1.0) == pytest.approx(1.0)
    assert not b.inside_support(np.array([2.0]))
    c = cosine_window(center=2.0, radius=1.0)
    assert c(0.5) == 0.0 and c(2.0) == pytest.approx(1.0)


def test_derivative_self_check_runs_on_builtins():
    for f in (gaussian_bump(), smooth_bump(), cosine_window(), monomial(4), from_expression("sin(t)*exp(-t)")):
        f.check_derivatives()


def test_self_check_catches_wrong_derivatives():
    t = sp.Symbol("t", real=True)
    f = TestFunction(t**2, [t], check=False)
    f._compiled[(1,)] = lambda x: 3 * x  # wrong
    with pytest.raises(ExpressionError):
        f.check_derivatives()


def test_dilation_and_fixing():
    f = smooth_bump(center=[2.0, 0.5], radius=[2.5, 0.45], arity=2)
    g = f.dilated(10, axes=[0])
    assert g(np.array([0.2, 0.5])) == pytest.approx(f(np.array([2.0, 0.5])))
    assert g.support[0] == pytest.approx((-0.05, 0.45))
    h = f.with_fixed([0.5], start=1)
    assert h.arity == 1 and h(2.0) == pytest.approx(1.0)
    assert f.with_fixed([2.0], start=1)(2.0) == 0.0


def test_parse_function_tags():
    assert parse_function("monomial-2")(3.0) == 9.0
    g = parse_function("gaussian-bump:center=1,width=0.3")
    assert g(1.0) == pytest.approx(1.0) and g(1.3) == pytest.approx(np.exp(-0.5))
    assert parse_function("t^3 - t")(2.0) == 6.0
    assert parse_function("cosine-window").support == ((0.0, 2.0),)
    assert constant(1.0)(np.array([1.0, 2.0])).tolist() == [1.0, 1.0]


def test_polynomial_detection():
    assert is_polynomial(monomial(2)) and polynomial_degree(monomial(2)) == 2
    assert polynomial_degree(from_expression("s^2 + s*t", 2)) == 2
    assert polynomial_degree(gaussian_bump()) is None


def test_compact_support_endpoint_is_zero():
    # ((2.5 − 1)/1.5)² rounds above 1 at the endpoint; the mask must catch it
    f = parse_function("smooth-bump:center=1,radius=1.5")
    assert f(np.array([2.5, -0.5])).tolist() == [0.0, 0.0]
    assert np.isfinite(szasz_classical(f, 40, 0.7))
