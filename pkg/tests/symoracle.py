"""Independent sympy translation used as a differentiation oracle."""

from __future__ import annotations

import sympy

from dglpilot.core.ast import Add, And, Cmp, Const, Div, Mul, Neg, Pow, Sub, TrueF, Var


def sym(t):
    match t:
        case Var(n):
            return sympy.Symbol(n)
        case Const(c):
            return sympy.Rational(c.numerator, c.denominator)
        case Neg(a):
            return -sym(a)
        case Add(l, r):
            return sym(l) + sym(r)
        case Sub(l, r):
            return sym(l) - sym(r)
        case Mul(l, r):
            return sym(l) * sym(r)
        case Div(l, r):
            return sym(l) / sym(r)
        case Pow(b, e):
            return sym(b) ** e
    raise TypeError(t)


def lie(expr, eqs):
    """Lie derivative of a sympy expression along ``[(var, rhs_term), ...]``."""
    return sympy.expand(sum(sympy.diff(expr, sympy.Symbol(v)) * sym(rhs) for v, rhs in eqs))


def atoms(f):
    """Flattened conjunction as (op, expanded lhs - rhs) pairs."""
    match f:
        case TrueF():
            return []
        case And(l, r):
            return atoms(l) + atoms(r)
        case Cmp(op, l, r):
            return [(op, sympy.expand(sym(l) - sym(r)))]
    raise TypeError(f)


def same_atom(a, b):
    """Comparisons equal up to expansion; equalities also up to sign."""
    (op1, e1), (op2, e2) = a, b
    if op1 != op2:
        return False
    if sympy.expand(e1 - e2) == 0:
        return True
    return op1 == "=" and sympy.expand(e1 + e2) == 0


def same_conjunction(f, g):
    xs, ys = atoms(f), atoms(g)
    return len(xs) == len(ys) and all(any(same_atom(x, y) for y in ys) for x in xs)

