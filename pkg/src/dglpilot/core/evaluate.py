"""Exact evaluation of terms and quantifier-free, modality-free formulas."""

from __future__ import annotations

from collections.abc import Mapping
from fractions import Fraction

from dglpilot.core.ast import (
    Add,
    And,
    Cmp,
    Const,
    Div,
    Equiv,
    FalseF,
    Formula,
    Imply,
    Mul,
    Neg,
    Not,
    Or,
    Pow,
    Sub,
    Term,
    TrueF,
    Var,
)


class EvaluationError(ValueError):
    pass


def eval_term(t: Term, env: Mapping[str, Fraction]) -> Fraction:
    match t:
        case Var(name):
            try:
                return Fraction(env[name])
            except KeyError:
                raise EvaluationError(f"unbound variable {name}") from None
        case Const(v):
            return v
        case Neg(a):
            return -eval_term(a, env)
        case Add(l, r):
            return eval_term(l, env) + eval_term(r, env)
        case Sub(l, r):
            return eval_term(l, env) - eval_term(r, env)
        case Mul(l, r):
            return eval_term(l, env) * eval_term(r, env)
        case Div(l, r):
            den = eval_term(r, env)
            if den == 0:
                raise EvaluationError("division by zero")
            return eval_term(l, env) / den
        case Pow(b, e):
            return eval_term(b, env) ** e
    raise TypeError(f"not a term: {t!r}")


_OPS = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "=": lambda a, b: a == b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
}


def eval_formula(f: Formula, env: Mapping[str, Fraction]) -> bool:
    match f:
        case TrueF():
            return True
        case FalseF():
            return False
        case Cmp(op, l, r):
            return _OPS[op](eval_term(l, env), eval_term(r, env))
        case Not(a):
            return not eval_formula(a, env)
        case And(l, r):
            return eval_formula(l, env) and eval_formula(r, env)
        case Or(l, r):
            return eval_formula(l, env) or eval_formula(r, env)
        case Imply(l, r):
            return (not eval_formula(l, env)) or eval_formula(r, env)
        case Equiv(l, r):
            return eval_formula(l, env) == eval_formula(r, env)
    raise EvaluationError(f"cannot evaluate {type(f).__name__} exactly")
