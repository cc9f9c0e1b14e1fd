"""Immutable abstract syntax for terms, formulas and hybrid games."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Union

# ---------------------------------------------------------------- terms


@dataclass(frozen=True, slots=True)
class Var:
    name: str


@dataclass(frozen=True, slots=True)
class Const:
    value: Fraction

    def __init__(self, value: Fraction | int | str) -> None:
        object.__setattr__(self, "value", Fraction(value))


@dataclass(frozen=True, slots=True)
class Neg:
    arg: Term


@dataclass(frozen=True, slots=True)
class Add:
    left: Term
    right: Term


@dataclass(frozen=True, slots=True)
class Sub:
    left: Term
    right: Term


@dataclass(frozen=True, slots=True)
class Mul:
    left: Term
    right: Term


@dataclass(frozen=True, slots=True)
class Div:
    left: Term
    right: Term


@dataclass(frozen=True, slots=True)
class Pow:
    base: Term
    exp: int

    def __post_init__(self) -> None:
        if not isinstance(self.exp, int) or self.exp < 0:
            raise ValueError(f"power exponent must be a natural number, got {self.exp!r}")


Term = Union[Var, Const, Neg, Add, Sub, Mul, Div, Pow]
BINARY_TERMS = (Add, Sub, Mul, Div)

# ------------------------------------------------------------- formulas

CMP_OPS = ("<", "<=", "=", ">=", ">")


@dataclass(frozen=True, slots=True)
class TrueF:
    pass


@dataclass(frozen=True, slots=True)
class FalseF:
    pass


@dataclass(frozen=True, slots=True)
class Cmp:
    op: str
    left: Term
    right: Term

    def __post_init__(self) -> None:
        if self.op not in CMP_OPS:
            raise ValueError(f"unknown comparison {self.op!r}")


@dataclass(frozen=True, slots=True)
class Not:
    arg: Formula


@dataclass(frozen=True, slots=True)
class And:
    left: Formula
    right: Formula


@dataclass(frozen=True, slots=True)
class Or:
    left: Formula
    right: Formula


@dataclass(frozen=True, slots=True)
class Imply:
    left: Formula
    right: Formula


@dataclass(frozen=True, slots=True)
class Equiv:
    left: Formula
    right: Formula


@dataclass(frozen=True, slots=True)
class Forall:
    var: str
    body: Formula


@dataclass(frozen=True, slots=True)
class Exists:
    var: str
    body: Formula


@dataclass(frozen=True, slots=True)
class Diamond:
    game: Game
    body: Formula


@dataclass(frozen=True, slots=True)
class Box:
    game: Game
    body: Formula


Formula = Union[TrueF, FalseF, Cmp, Not, And, Or, Imply, Equiv, Forall, Exists, Diamond, Box]
TRUE = TrueF()
FALSE = FalseF()

# ---------------------------------------------------------------- games


@dataclass(frozen=True, slots=True)
class Assign:
    var: str
    term: Term


@dataclass(frozen=True, slots=True)
class AssignAny:
    var: str


@dataclass(frozen=True, slots=True)
class Test:
    cond: Formula


@dataclass(frozen=True, slots=True)
class Seq:
    left: Game
    right: Game


@dataclass(frozen=True, slots=True)
class Choice:
    left: Game
    right: Game


@dataclass(frozen=True, slots=True)
class Loop:
    body: Game


@dataclass(frozen=True, slots=True)
class Ode:
    eqs: tuple[tuple[str, Term], ...]
    domain: Formula = TRUE

    def __post_init__(self) -> None:
        if not self.eqs:
            raise ValueError("ODE needs at least one equation")
        names = [v for v, _ in self.eqs]
        if len(set(names)) != len(names):
            raise ValueError(f"ODE variables must be distinct: {names}")

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(v for v, _ in self.eqs)


@dataclass(frozen=True, slots=True)
class Dual:
    game: Game


Game = Union[Assign, AssignAny, Test, Seq, Choice, Loop, Ode, Dual]
ATOMIC_GAMES = (Assign, AssignAny, Test)


def conj(*parts: Formula) -> Formula:
    """Right-nested conjunction; the empty conjunction is true."""
    items = [p for p in parts]
    if not items:
        return TRUE
    out = items[-1]
    for p in reversed(items[:-1]):
        out = And(p, out)
    return out


def disj(*parts: Formula) -> Formula:
    items = [p for p in parts]
    if not items:
        return FALSE
    out = items[-1]
    for p in reversed(items[:-1]):
        out = Or(p, out)
    return out


def seq(*games: Game) -> Game:
    if not games:
        raise ValueError("seq needs at least one game")
    out = games[-1]
    for g in reversed(games[:-1]):
        out = Seq(g, out)
    return out


def conjuncts(f: Formula) -> list[Formula]:
    if isinstance(f, And):
        return conjuncts(f.left) + conjuncts(f.right)
    if isinstance(f, TrueF):
        return []
    return [f]


def disjuncts(f: Formula) -> list[Formula]:
    if isinstance(f, Or):
        return disjuncts(f.left) + disjuncts(f.right)
    if isinstance(f, FalseF):
        return []
    return [f]


def is_modal(f: Formula) -> bool:
    """True when a modality occurs anywhere in ``f``."""
    match f:
        case Diamond() | Box():
            return True
        case Not(a):
            return is_modal(a)
        case And(l, r) | Or(l, r) | Imply(l, r) | Equiv(l, r):
            return is_modal(l) or is_modal(r)
        case Forall(_, b) | Exists(_, b):
            return is_modal(b)
        case _:
            return False


def has_quantifier(f: Formula) -> bool:
    match f:
        case Forall() | Exists():
            return True
        case Not(a):
            return has_quantifier(a)
        case And(l, r) | Or(l, r) | Imply(l, r) | Equiv(l, r):
            return has_quantifier(l) or has_quantifier(r)
        case Diamond(_, b) | Box(_, b):
            return has_quantifier(b)
        case _:
            return False
