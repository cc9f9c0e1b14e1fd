"""Free and bound variables, capture-avoiding substitution."""

from __future__ import annotations

import itertools

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


def term_vars(t: Term) -> frozenset[str]:
    match t:
        case Var(name):
            return frozenset({name})
        case Const():
            return frozenset()
        case Neg(a) | Pow(a, _):
            return term_vars(a)
        case Add(l, r) | Sub(l, r) | Mul(l, r) | Div(l, r):
            return term_vars(l) | term_vars(r)
    raise TypeError(f"not a term: {t!r}")


def free_vars(x: Formula | Game | Term) -> frozenset[str]:
    """Free variables of a formula, game or term."""
    if isinstance(x, (Var, Const, Neg, Pow, Add, Sub, Mul, Div)):
        return term_vars(x)
    if isinstance(x, (Assign, AssignAny, Test, Seq, Choice, Loop, Ode, Dual)):
        return _game_free(x)
    return _formula_free(x)


def _formula_free(f: Formula) -> frozenset[str]:
    match f:
        case TrueF() | FalseF():
            return frozenset()
        case Cmp(_, l, r):
            return term_vars(l) | term_vars(r)
        case Not(a):
            return _formula_free(a)
        case And(l, r) | Or(l, r) | Imply(l, r) | Equiv(l, r):
            return _formula_free(l) | _formula_free(r)
        case Forall(v, b) | Exists(v, b):
            return _formula_free(b) - {v}
        case Diamond(g, b) | Box(g, b):
            return _game_free(g) | (_formula_free(b) - must_bound_vars(g))
    raise TypeError(f"not a formula: {f!r}")


def _game_free(g: Game) -> frozenset[str]:
    match g:
        case Assign(_, t):
            return term_vars(t)
        case AssignAny():
            return frozenset()
        case Test(c):
            return _formula_free(c)
        case Seq(l, r):
            return _game_free(l) | (_game_free(r) - must_bound_vars(l))
        case Choice(l, r):
            return _game_free(l) | _game_free(r)
        case Loop(b) | Dual(b):
            return _game_free(b)
        case Ode(eqs, dom):
            out = frozenset(v for v, _ in eqs)
            for _, t in eqs:
                out |= term_vars(t)
            return out | _formula_free(dom)
    raise TypeError(f"not a game: {g!r}")


def bound_vars(g: Game) -> frozenset[str]:
    """Variables a game may write."""
    match g:
        case Assign(v, _) | AssignAny(v):
            return frozenset({v})
        case Test():
            return frozenset()
        case Seq(l, r) | Choice(l, r):
            return bound_vars(l) | bound_vars(r)
        case Loop(b) | Dual(b):
            return bound_vars(b)
        case Ode(eqs, _):
            return frozenset(v for v, _ in eqs)
    raise TypeError(f"not a game: {g!r}")


def must_bound_vars(g: Game) -> frozenset[str]:
    """Variables written on every run of a game."""
    match g:
        case Assign(v, _) | AssignAny(v):
            return frozenset({v})
        case Test() | Loop():
            return frozenset()
        case Seq(l, r):
            return must_bound_vars(l) | must_bound_vars(r)
        case Choice(l, r):
            return must_bound_vars(l) & must_bound_vars(r)
        case Dual(b):
            return must_bound_vars(b)
        case Ode(eqs, _):
            return frozenset(v for v, _ in eqs)
    raise TypeError(f"not a game: {g!r}")


def all_names(x: Formula | Game | Term) -> frozenset[str]:
    """Every variable name occurring anywhere, bound or free."""
    match x:
        case Var(name):
            return frozenset({name})
        case Const() | TrueF() | FalseF():
            return frozenset()
        case AssignAny(v):
            return frozenset({v})
        case Neg(a) | Pow(a, _) | Not(a) | Test(a) | Loop(a) | Dual(a):
            return all_names(a)
        case Add(l, r) | Sub(l, r) | Mul(l, r) | Div(l, r) | And(l, r) | Or(l, r) | Imply(l, r) | Equiv(
            l, r
        ) | Seq(l, r) | Choice(l, r) | Diamond(l, r) | Box(l, r):
            return all_names(l) | all_names(r)
        case Cmp(_, l, r):
            return all_names(l) | all_names(r)
        case Forall(v, b) | Exists(v, b):
            return all_names(b) | {v}
        case Assign(v, t):
            return all_names(t) | {v}
        case Ode(eqs, dom):
            out = all_names(dom)
            for v, t in eqs:
                out |= all_names(t) | {v}
            return out
    return frozenset()


def fresh_name(base: str, avoid: frozenset[str] | set[str]) -> str:
    """First of ``base0``, ``base1``, ... not in ``avoid``."""
    for k in itertools.count():
        cand = f"{base}{k}"
        if cand not in avoid:
            return cand
    raise AssertionError("unreachable")


def substitute_term(t: Term, var: str, repl: Term) -> Term:
    match t:
        case Var(name):
            return repl if name == var else t
        case Const():
            return t
        case Neg(a):
            return Neg(substitute_term(a, var, repl))
        case Pow(b, e):
            return Pow(substitute_term(b, var, repl), e)
        case Add(l, r):
            return Add(substitute_term(l, var, repl), substitute_term(r, var, repl))
        case Sub(l, r):
            return Sub(substitute_term(l, var, repl), substitute_term(r, var, repl))
        case Mul(l, r):
            return Mul(substitute_term(l, var, repl), substitute_term(r, var, repl))
        case Div(l, r):
            return Div(substitute_term(l, var, repl), substitute_term(r, var, repl))
    raise TypeError(f"not a term: {t!r}")


def rename_bound(f: Formula, old: str, new: str) -> Formula:
    """Rename free occurrences of ``old`` to the fresh name ``new``."""
    return substitute(f, old, Var(new))


def substitute(f: Formula, var: str, repl: Term) -> Formula:
    """Replace free ``var`` by ``repl`` in ``f`` without capturing variables of ``repl``.

    Modal subformulas whose game writes ``var`` or a variable of ``repl`` are
    wrapped as ``[var:=repl]`` instead, which is equivalent and always admissible.
    """
    repl_vars = term_vars(repl)
    if var not in free_vars(f):
        return f
    match f:
        case Cmp(op, l, r):
            return Cmp(op, substitute_term(l, var, repl), substitute_term(r, var, repl))
        case Not(a):
            return Not(substitute(a, var, repl))
        case And(l, r):
            return And(substitute(l, var, repl), substitute(r, var, repl))
        case Or(l, r):
            return Or(substitute(l, var, repl), substitute(r, var, repl))
        case Imply(l, r):
            return Imply(substitute(l, var, repl), substitute(r, var, repl))
        case Equiv(l, r):
            return Equiv(substitute(l, var, repl), substitute(r, var, repl))
        case Forall(v, b) | Exists(v, b):
            if v in repl_vars:
                new = fresh_name(v, all_names(b) | repl_vars | {var})
                b = rename_bound(b, v, new)
                v = new
            body = substitute(b, var, repl)
            return Forall(v, body) if isinstance(f, Forall) else Exists(v, body)
        case Diamond(g, b) | Box(g, b):
            if bound_vars(g) & (repl_vars | {var}):
                return Box(Assign(var, repl), f)
            g2 = substitute_game(g, var, repl)
            b2 = substitute(b, var, repl)
            return Diamond(g2, b2) if isinstance(f, Diamond) else Box(g2, b2)
    return f


def substitute_game(g: Game, var: str, repl: Term) -> Game:
    """Substitute into a game that binds neither ``var`` nor variables of ``repl``."""
    match g:
        case Assign(v, t):
            return Assign(v, substitute_term(t, var, repl))
        case AssignAny():
            return g
        case Test(c):
            return Test(substitute(c, var, repl))
        case Seq(l, r):
            return Seq(substitute_game(l, var, repl), substitute_game(r, var, repl))
        case Choice(l, r):
            return Choice(substitute_game(l, var, repl), substitute_game(r, var, repl))
        case Loop(b):
            return Loop(substitute_game(b, var, repl))
        case Dual(b):
            return Dual(substitute_game(b, var, repl))
        case Ode(eqs, dom):
            return Ode(tuple((v, substitute_term(t, var, repl)) for v, t in eqs), substitute(dom, var, repl))
    raise TypeError(f"not a game: {g!r}")
