"""ASCII printer whose output re-parses to the same tree."""

from __future__ import annotations

from collections.abc import Callable
from fractions import Fraction

from dglpilot.core.ast import (
    Add,
    And,
    Assign,
    AssignAny,
    Box,
    Choice,
    Cmp,
    Const,
    Diamond,
    Div,
    Dual,
    Equiv,
    Exists,
    FalseF,
    Forall,
    Formula,
    Game,
    Imply,
    Loop,
    Mul,
    Neg,
    Not,
    Ode,
    Or,
    Pow,
    Seq,
    Sub,
    Term,
    Test,
    TrueF,
    Var,
)

# term precedence
_T_ADD, _T_MUL, _T_NEG, _T_POW, _T_ATOM = 1, 2, 3, 4, 5


def format_const(value: Fraction) -> str:
    """Exact decimal when the denominator allows, otherwise a parenthesised quotient."""
    if value < 0:
        return f"(-{format_const(-value)})"
    if value.denominator == 1:
        return str(value.numerator)
    d = value.denominator
    twos = fives = 0
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    if d != 1:
        return f"({value.numerator}/{value.denominator})"
    digits = max(twos, fives)
    scaled = value * 10**digits
    whole, frac = divmod(scaled.numerator, 10**digits)
    return f"{whole}.{frac:0{digits}d}".rstrip("0").rstrip(".")


def _term_prec(t: Term) -> int:
    match t:
        case Add() | Sub():
            return _T_ADD
        case Mul() | Div():
            return _T_MUL
        case Neg():
            return _T_NEG
        case Pow():
            return _T_POW
        case _:
            return _T_ATOM


def print_term(t: Term) -> str:
    match t:
        case Var(name):
            return name
        case Const(v):
            return format_const(v)
        case Neg(a):
            inner = print_term(a)
            if _term_prec(a) < _T_NEG or isinstance(a, Neg) or inner.startswith("-"):
                inner = f"({inner})"
            return f"-{inner}"
        case Add(l, r):
            return f"{_wrap_left(l, _T_ADD)} + {_wrap_right(r, _T_ADD)}"
        case Sub(l, r):
            return f"{_wrap_left(l, _T_ADD)} - {_wrap_right(r, _T_ADD)}"
        case Mul(l, r):
            return f"{_wrap_left(l, _T_MUL)}*{_wrap_right(r, _T_MUL)}"
        case Div(l, r):
            return f"{_wrap_left(l, _T_MUL)}/{_wrap_right(r, _T_MUL)}"
        case Pow(b, e):
            inner = print_term(b)
            if not (isinstance(b, Var) or (isinstance(b, Const) and inner[0].isdigit())):
                inner = f"({inner})"
            return f"{inner}^{e}"
    raise TypeError(f"not a term: {t!r}")


def _wrap_left(t: Term, prec: int) -> str:
    s = print_term(t)
    return f"({s})" if _term_prec(t) < prec else s


def _wrap_right(t: Term, prec: int) -> str:
    s = print_term(t)
    return f"({s})" if _term_prec(t) <= prec else s


# formula precedence
_F_EQUIV, _F_IMPLY, _F_OR, _F_AND, _F_UNARY, _F_ATOM = 1, 2, 3, 4, 5, 6


def _formula_prec(f: Formula) -> int:
    match f:
        case Equiv():
            return _F_EQUIV
        case Imply():
            return _F_IMPLY
        case Or():
            return _F_OR
        case And():
            return _F_AND
        case Not() | Forall() | Exists() | Diamond() | Box():
            return _F_UNARY
        case _:
            return _F_ATOM


_BINARY_F = {Equiv: ("<->", _F_EQUIV), Imply: ("->", _F_IMPLY), Or: ("|", _F_OR), And: ("&", _F_AND)}


def print_formula(f: Formula) -> str:
    match f:
        case TrueF():
            return "true"
        case FalseF():
            return "false"
        case Cmp(op, l, r):
            return f"{print_term(l)} {op} {print_term(r)}"
        case Not(a):
            return f"!{_wrap_unary(a)}"
        case Forall(v, b):
            return f"\\forall {v} {_wrap_unary(b)}"
        case Exists(v, b):
            return f"\\exists {v} {_wrap_unary(b)}"
        case Diamond(g, b):
            return f"<{print_game(g)}>{_wrap_unary(b)}"
        case Box(g, b):
            return f"[{print_game(g)}]{_wrap_unary(b)}"
        case And(l, r) | Or(l, r) | Imply(l, r) | Equiv(l, r):
            sym, prec = _BINARY_F[type(f)]
            ls = print_formula(l)
            rs = print_formula(r)
            if _formula_prec(l) <= prec:
                ls = f"({ls})"
            if _formula_prec(r) < prec:
                rs = f"({rs})"
            return f"{ls} {sym} {rs}"
    raise TypeError(f"not a formula: {f!r}")


def _wrap_unary(f: Formula) -> str:
    s = print_formula(f)
    return f"({s})" if _formula_prec(f) < _F_UNARY else s


def print_ode(o: Ode) -> str:
    eqs = ", ".join(f"{v}'={print_term(t)}" for v, t in o.eqs)
    if isinstance(o.domain, TrueF):
        return "{" + eqs + "}"
    return "{" + eqs + " & " + print_formula(o.domain) + "}"


def print_game(g: Game, annotate: Callable[[tuple[int, ...]], str | None] | None = None) -> str:
    """Print a game; ``annotate`` maps node paths to optional label prefixes."""
    return _print_game(g, (), annotate)


def _print_game(g: Game, path: tuple[int, ...], ann: Callable[[tuple[int, ...]], str | None] | None) -> str:
    label = ann(path) if ann is not None else None
    match g:
        case Assign(v, t):
            s = f"{v}:={print_term(t)};"
        case AssignAny(v):
            s = f"{v}:=*;"
        case Test(c):
            s = f"?{print_formula(c)};"
        case Ode():
            s = print_ode(g)
        case Loop(b):
            body = _print_game(b, path + (0,), ann)
            if label is not None:
                return "{" + label + ": " + body + "}*"
            return "{" + body + "}*"
        case Dual(b):
            inner = _print_game(b, path + (0,), ann)
            if isinstance(b, (Assign, AssignAny, Test, Ode, Loop, Dual)):
                s = inner + "^@"
            else:
                s = "{" + inner + "}^@"
        case Seq(l, r):
            ls = _print_game(l, path + (0,), ann)
            if isinstance(l, (Seq, Choice)):
                ls = "{" + ls + "}"
            rs = _print_game(r, path + (1,), ann)
            if isinstance(r, Choice):
                rs = "{" + rs + "}"
            sep = " " if ls.rstrip("^@").endswith(";") else "; "
            s = ls + sep + rs
        case Choice(l, r):
            ls = _print_game(l, path + (0,), ann)
            if isinstance(l, Choice):
                ls = "{" + ls + "}"
            s = f"{ls} ++ {_print_game(r, path + (1,), ann)}"
        case _:
            raise TypeError(f"not a game: {g!r}")
    if label is not None and isinstance(g, (AssignAny, Ode)):
        return "{" + label + ": " + s + "}"
    return s
