from __future__ import annotations

import random
from fractions import Fraction

import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

import gen
from symoracle import lie, same_conjunction, sym
from dglpilot.core import parse_formula, parse_game, parse_term, simplify, substitute
from dglpilot.core.ast import TRUE, And, Cmp, Const, Imply, Not, Var
from dglpilot.core.evaluate import eval_term
from dglpilot.diffmath import (
    MAX_DRI_ORDER,
    DerivativeError,
    NonPolynomialError,
    OdeSystem,
    Polynomial,
    clear_denominators,
    di_vc,
    dri_vc,
    formula_derivative,
    iterated_lie,
    lie_derivative,
    to_polynomial,
    to_term,
)

LV = parse_game("{x'=a*x-b*x*y, y'=d*x*y-g*y}")
CIRCLE = parse_game("{x'=y, y'=-x}")


def P(text: str) -> Polynomial:
    return to_polynomial(parse_term(text))


def equal_sym(p: Polynomial, expr) -> bool:
    return sympy.expand(sym(to_term(p)) - expr) == 0


# ------------------------------------------------------------ polynomials


def test_lv_plant_polynomial():
    p = P("a*x - b*x*y")
    assert p.as_dict() == {(("a", 1), ("x", 1)): 1, (("b", 1), ("x", 1), ("y", 1)): -1}


def test_expansion():
    assert P("(x+1)*(x-1)") == P("x^2 - 1")


def test_division_by_variable_rejected():
    with pytest.raises(NonPolynomialError):
        P("1/x")


def test_division_by_constant_allowed():
    assert P("x/4") == Polynomial.from_dict({(("x", 1),): Fraction(1, 4)})


def test_no_zero_coefficients_stored():
    p = P("x*y - y*x + 3")
    assert p.terms == (((), Fraction(3)),)


@settings(max_examples=300, deadline=None)
@given(st.integers(min_value=0, max_value=10**9))
def test_to_polynomial_agrees_with_sympy(seed):
    t = gen.term(random.Random(seed), 4, division=False)
    assert equal_sym(to_polynomial(t), sympy.expand(sym(t)))


@settings(max_examples=300, deadline=None)
@given(st.integers(min_value=0, max_value=10**9))
def test_to_term_round_trip_preserves_value(seed):
    rng = random.Random(seed)
    t = gen.term(rng, 4, division=False)
    p = to_polynomial(t)
    env = {n: Fraction(rng.randint(-5, 5), rng.randint(1, 3)) for n in gen.NAMES}
    assert p.evaluate(env) == eval_term(t, env) == eval_term(to_term(p), env)


def test_clear_denominators_lv_equilibrium():
    num, dens = clear_denominators(parse_term("x - g/d"))
    assert num == P("d*x - g")
    assert dens == (P("d"),)


# ------------------------------------------------------------ Lie derivatives


def test_lie_derivative_of_cleared_equilibrium():
    assert lie_derivative(P("d*x - g"), LV) == P("d*(a*x - b*x*y)")


def test_lie_derivative_of_constant_is_zero():
    assert lie_derivative(P("c"), LV).is_zero
    assert lie_derivative(Polynomial.const(7), LV).is_zero


def test_lie_derivative_square_under_unit_flow():
    p = lie_derivative(P("x^2"), parse_game("{x'=1}"))
    assert p == P("2*x")
    assert equal_sym(p, lie(sym(parse_term("x^2")), [("x", Const(1))]))


ODES = [LV, CIRCLE, parse_game("{x'=v, v'=-k*x, t'=1}"), parse_game("{A'=kB*B-kA*A, B'=kA*A-kB*B}")]


@pytest.mark.parametrize("ode", ODES, ids=["lv", "circle", "spring", "reaction"])
def test_lie_derivative_matches_sympy_oracle(ode):
    rng = random.Random(7)
    names = tuple(sorted({v for v, _ in ode.eqs} | {"a", "k"}))
    for _ in range(125):
        t = gen.term(rng, 3, names=names, division=False)
        got = lie_derivative(to_polynomial(t), ode)
        assert equal_sym(got, lie(sym(t), ode.eqs))


@settings(max_examples=500, deadline=None)
@given(st.integers(min_value=0, max_value=10**9))
def test_lie_derivative_linearity_and_leibniz(seed):
    rng = random.Random(seed)
    names = ("x", "y", "a", "b")
    p = to_polynomial(gen.term(rng, 3, names=names, division=False))
    q = to_polynomial(gen.term(rng, 3, names=names, division=False))
    c = Fraction(rng.randint(-4, 4))
    L = lambda r: lie_derivative(r, LV)  # noqa: E731
    assert L(p + q) == L(p) + L(q)
    assert L(p.scale(c)) == L(p).scale(c)
    assert L(p * q) == L(p) * q + p * L(q)


def test_iterated_lie_lengths():
    assert len(iterated_lie(P("x"), CIRCLE, 3)) == 3
    assert iterated_lie(P("x"), CIRCLE, 2) == [P("y"), P("-x")]


def test_ode_rejects_nonpolynomial_rhs():
    with pytest.raises(NonPolynomialError):
        OdeSystem.from_ode(parse_game("{x'=1/x}"))


# ------------------------------------------------------------ dRI


def test_dri_equilibrium_premise():
    ctx = parse_formula("d*x - g = 0 & b*y - a = 0")
    vc = dri_vc([P("d*x - g"), P("b*y - a")], LV, 1, ctx)
    assert isinstance(vc, Imply)
    assert same_conjunction(vc.left, ctx)
    assert same_conjunction(vc.right, parse_formula("d*(a*x - b*x*y) = 0 & b*(d*x*y - g*y) = 0"))


def test_dri_with_term_targets_adds_denominator_side_conditions():
    vc = dri_vc([parse_term("x - g/d")], LV, 1)
    assert Not(Cmp("=", Var("d"), Const(0))) in _conjuncts(vc.left)


def _conjuncts(f):
    return _conjuncts(f.left) + _conjuncts(f.right) if isinstance(f, And) else [f]


def test_dri_trivial_target():
    vc = dri_vc([P("c - 1")], LV, 1)
    assert vc.right == Cmp("=", Const(0), Const(0))


def test_dri_second_order_circle_vanishes():
    vc = dri_vc([P("x^2 + y^2 - 1")], CIRCLE, 2)
    assert vc.right == And(Cmp("=", Const(0), Const(0)), Cmp("=", Const(0), Const(0)))
    for level in iterated_lie(P("x^2 + y^2 - 1"), CIRCLE, 2):
        assert level.is_zero


def test_dri_includes_domain():
    ode = parse_game("{x'=v, t'=1 & t <= T}")
    vc = dri_vc([P("x")], ode, 1, parse_formula("x = 0"))
    assert parse_formula("t <= T") in _conjuncts(vc.left)


@pytest.mark.parametrize("order", [0, MAX_DRI_ORDER + 1])
def test_dri_order_bounds(order):
    with pytest.raises(ValueError):
        dri_vc([P("x")], CIRCLE, order)


# ------------------------------------------------------------ dI


def test_derivative_of_lower_bound_under_lv():
    d = formula_derivative(parse_formula("x >= xmin"), LV)
    assert isinstance(d, Cmp) and d.op == ">="
    assert sympy.expand(sym(d.left) - sym(d.right) - sym(parse_term("a*x - b*x*y"))) == 0


def test_derivative_of_equal_conjunction():
    d = formula_derivative(parse_formula("x = c & y = c"), LV)
    assert isinstance(d, And) and d.left.op == "=" and d.right.op == "="


def test_derivative_of_true():
    assert formula_derivative(TRUE, LV) == TRUE


@pytest.mark.parametrize("op,expected", [("<", "<="), ("<=", "<="), (">", ">="), (">=", ">="), ("=", "=")])
def test_strict_comparisons_derive_weak(op, expected):
    d = formula_derivative(parse_formula(f"x {op} 1"), CIRCLE)
    assert d.op == expected


def test_disjunction_derives_conjunction():
    d = formula_derivative(parse_formula("x >= 0 | y >= 0"), CIRCLE)
    assert isinstance(d, And)


def test_negation_pushed_before_deriving():
    d = formula_derivative(parse_formula("!(x > 0)"), CIRCLE)
    assert d.op == "<="


@pytest.mark.parametrize("text", ["\\forall x x > 0", "<x:=1;>x > 0", "x > 0 <-> y > 0", "!(x = 0)"])
def test_derivative_rejects(text):
    with pytest.raises(DerivativeError):
        formula_derivative(parse_formula(text), CIRCLE)


def test_di_vc_lower_bound():
    gamma = parse_formula("a > 0 & b > 0")
    vc = di_vc(parse_formula("x >= xmin"), LV, gamma)
    assert vc.initial == Imply(gamma, parse_formula("x >= xmin"))
    assert isinstance(vc.step, Imply) and vc.step.left == gamma
    step = vc.step.right
    assert step.op == ">=" and sympy.expand(sym(step.left) - sym(step.right) - sym(parse_term("a*x - b*x*y"))) == 0


def test_di_vc_coolant_discharge_with_zero_flow():
    ode = parse_game("{absbd'=flow*c1*tempDiff, disch'=flow, tempDiff'=-flow*c2*tempDiff+g, t'=1, deadline'=-1 & t<=T}")
    vc = di_vc(parse_formula("disch <= dmax"), ode)
    closed = substitute(vc.step.right, "flow", Const(0))
    assert simplify(closed) in (TRUE, Cmp("<=", Const(0), Const(0)))
