"""Light simplification: constant folding and flattening of conjunctions/disjunctions.

Deliberately conservative so guessed formulas stay recognisable in prompts.
"""

from __future__ import annotations

from dglpilot.core.ast import (
    FALSE,
    TRUE,
    Add,
    And,
    Box,
    Cmp,
    Const,
    Diamond,
    Div,
    Equiv,
    Exists,
    FalseF,
    Forall,
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
    conj,
    conjuncts,
    disj,
    disjuncts,
)

_CMP_EVAL = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "=": lambda a, b: a == b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
}


def fold_term(t: Term) -> Term:
    match t:
        case Neg(a):
            a = fold_term(a)
            if isinstance(a, Const) and a.value == 0:
                return a
            return Neg(a)
        case Add(l, r) | Sub(l, r) | Mul(l, r) | Div(l, r):
            l, r = fold_term(l), fold_term(r)
            lv, rv = _const_value(l), _const_value(r)
            if lv is not None and rv is not None:
                match t:
                    case Add():
                        v = lv + rv
                    case Sub():
                        v = lv - rv
                    case Mul():
                        v = lv * rv
                    case _:
                        if rv == 0:
                            return Div(l, r)
                        v = lv / rv
                if v >= 0:
                    return Const(v)
                return Neg(Const(-v))
            return type(t)(l, r)
        case Pow(b, e):
            b = fold_term(b)
            bv = _const_value(b)
            if bv is not None:
                v = bv**e
                return Const(v) if v >= 0 else Neg(Const(-v))
            return Pow(b, e)
    return t


def _const_value(t: Term):
    match t:
        case Const(v):
            return v
        case Neg(Const(v)):
            return -v
    return None


def simplify(f: Formula) -> Formula:
    """Fold constants and flatten; keeps modal and quantified structure."""
    match f:
        case Cmp(op, l, r):
            l, r = fold_term(l), fold_term(r)
            lv, rv = _const_value(l), _const_value(r)
            if lv is not None and rv is not None:
                return TRUE if _CMP_EVAL[op](lv, rv) else FALSE
            return Cmp(op, l, r)
        case Not(a):
            a = simplify(a)
            if isinstance(a, TrueF):
                return FALSE
            if isinstance(a, FalseF):
                return TRUE
            return Not(a)
        case And():
            parts: list[Formula] = []
            for p in conjuncts(f):
                p = simplify(p)
                if isinstance(p, FalseF):
                    return FALSE
                for q in conjuncts(p):
                    if q not in parts:
                        parts.append(q)
            return conj(*parts)
        case Or():
            parts = []
            for p in disjuncts(f):
                p = simplify(p)
                if isinstance(p, TrueF):
                    return TRUE
                for q in disjuncts(p):
                    if q not in parts:
                        parts.append(q)
            return disj(*parts)
        case Imply(l, r):
            l, r = simplify(l), simplify(r)
            if isinstance(l, TrueF):
                return r
            if isinstance(l, FalseF) or isinstance(r, TrueF):
                return TRUE
            return Imply(l, r)
        case Equiv(l, r):
            return Equiv(simplify(l), simplify(r))
        case Forall(v, b):
            b = simplify(b)
            return b if isinstance(b, (TrueF, FalseF)) else Forall(v, b)
        case Exists(v, b):
            b = simplify(b)
            return b if isinstance(b, (TrueF, FalseF)) else Exists(v, b)
        case Diamond(g, b):
            return Diamond(g, simplify(b))
        case Box(g, b):
            return Box(g, simplify(b))
    return f
