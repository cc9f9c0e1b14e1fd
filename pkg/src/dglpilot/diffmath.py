"""Exact multivariate polynomials, Lie derivatives and dI/dRI verification conditions."""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from fractions import Fraction

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
    Ode,
    Or,
    Pow,
    Sub,
    Term,
    TrueF,
    Var,
    conj,
)
from dglpilot.core.simplify import simplify

Monomial = tuple[tuple[str, int], ...]


class NonPolynomialError(ValueError):
    """A term that is not a polynomial over the rationals."""


class DerivativeError(ValueError):
    """A formula outside the fragment that can be differentiated."""


def _mono_mul(a: Monomial, b: Monomial) -> Monomial:
    exps = dict(a)
    for v, e in b:
        exps[v] = exps.get(v, 0) + e
    return tuple(sorted(exps.items()))


def _mono_degree(m: Monomial) -> int:
    return sum(e for _, e in m)


def _order_key(m: Monomial) -> tuple:
    return (-_mono_degree(m), m)


@dataclass(frozen=True, slots=True)
class Polynomial:
    """Sparse polynomial; ``terms`` is sorted by graded order with no zero coefficients."""

    terms: tuple[tuple[Monomial, Fraction], ...] = ()

    @staticmethod
    def from_dict(d: Mapping[Monomial, Fraction | int]) -> Polynomial:
        items = [(tuple(sorted(m)), Fraction(c)) for m, c in d.items() if c != 0]
        merged: dict[Monomial, Fraction] = {}
        for m, c in items:
            m = tuple((v, e) for v, e in m if e != 0)
            merged[m] = merged.get(m, Fraction(0)) + c
        return Polynomial(tuple(sorted(((m, c) for m, c in merged.items() if c != 0), key=lambda mc: _order_key(mc[0]))))

    @staticmethod
    def const(c: Fraction | int) -> Polynomial:
        return Polynomial.from_dict({(): Fraction(c)})

    @staticmethod
    def var(name: str) -> Polynomial:
        return Polynomial.from_dict({((name, 1),): 1})

    def as_dict(self) -> dict[Monomial, Fraction]:
        return dict(self.terms)

    def __add__(self, other: Polynomial) -> Polynomial:
        d = self.as_dict()
        for m, c in other.terms:
            d[m] = d.get(m, Fraction(0)) + c
        return Polynomial.from_dict(d)

    def __neg__(self) -> Polynomial:
        return Polynomial(tuple((m, -c) for m, c in self.terms))

    def __sub__(self, other: Polynomial) -> Polynomial:
        return self + (-other)

    def __mul__(self, other: Polynomial) -> Polynomial:
        d: dict[Monomial, Fraction] = {}
        for m1, c1 in self.terms:
            for m2, c2 in other.terms:
                m = _mono_mul(m1, m2)
                d[m] = d.get(m, Fraction(0)) + c1 * c2
        return Polynomial.from_dict(d)

    def scale(self, c: Fraction | int) -> Polynomial:
        return Polynomial.from_dict({m: k * Fraction(c) for m, k in self.terms})

    def __pow__(self, n: int) -> Polynomial:
        if n < 0:
            raise ValueError("negative power")
        out = Polynomial.const(1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def is_constant(self) -> bool:
        return all(m == () for m, _ in self.terms)

    def constant_value(self) -> Fraction:
        if not self.is_constant:
            raise ValueError("polynomial is not constant")
        return dict(self.terms).get((), Fraction(0))

    @property
    def variables(self) -> frozenset[str]:
        return frozenset(v for m, _ in self.terms for v, _ in m)

    @property
    def degree(self) -> int:
        return max((_mono_degree(m) for m, _ in self.terms), default=0)

    def derivative(self, var: str) -> Polynomial:
        d: dict[Monomial, Fraction] = {}
        for m, c in self.terms:
            exps = dict(m)
            e = exps.get(var, 0)
            if e == 0:
                continue
            exps[var] = e - 1
            key = tuple(sorted((v, k) for v, k in exps.items() if k))
            d[key] = d.get(key, Fraction(0)) + c * e
        return Polynomial.from_dict(d)

    def evaluate(self, env: Mapping[str, Fraction | int]) -> Fraction:
        total = Fraction(0)
        for m, c in self.terms:
            v = c
            for name, e in m:
                v *= Fraction(env[name]) ** e
            total += v
        return total

    def substitute(self, var: str, repl: Polynomial) -> Polynomial:
        out = Polynomial()
        for m, c in self.terms:
            part = Polynomial.const(c)
            for name, e in m:
                part = part * (repl**e if name == var else Polynomial.var(name) ** e)
            out = out + part
        return out


def to_polynomial(t: Term) -> Polynomial:
    """Expand a term; division is allowed only by nonzero constants."""
    match t:
        case Var(name):
            return Polynomial.var(name)
        case Const(v):
            return Polynomial.const(v)
        case Neg(a):
            return -to_polynomial(a)
        case Add(l, r):
            return to_polynomial(l) + to_polynomial(r)
        case Sub(l, r):
            return to_polynomial(l) - to_polynomial(r)
        case Mul(l, r):
            return to_polynomial(l) * to_polynomial(r)
        case Pow(b, e):
            return to_polynomial(b) ** e
        case Div(l, r):
            den = to_polynomial(r)
            if not den.is_constant:
                raise NonPolynomialError(f"division by a non-constant term is not polynomial: {t!r}")
            c = den.constant_value()
            if c == 0:
                raise NonPolynomialError("division by zero")
            return to_polynomial(l).scale(1 / c)
    raise TypeError(f"not a term: {t!r}")


@dataclass(frozen=True, slots=True)
class RationalForm:
    """``num / den`` with ``den`` a product of the syntactic denominators."""

    num: Polynomial
    den: Polynomial
    denominators: tuple[Polynomial, ...]


def to_rational(t: Term) -> RationalForm:
    match t:
        case Var() | Const():
            return RationalForm(to_polynomial(t), Polynomial.const(1), ())
        case Neg(a):
            r = to_rational(a)
            return RationalForm(-r.num, r.den, r.denominators)
        case Add(l, r) | Sub(l, r):
            a, b = to_rational(l), to_rational(r)
            if a.den == b.den:
                num = a.num + b.num if isinstance(t, Add) else a.num - b.num
                return RationalForm(num, a.den, _merge(a.denominators, b.denominators))
            left, right = a.num * b.den, b.num * a.den
            num = left + right if isinstance(t, Add) else left - right
            return RationalForm(num, a.den * b.den, _merge(a.denominators, b.denominators))
        case Mul(l, r):
            a, b = to_rational(l), to_rational(r)
            return RationalForm(a.num * b.num, a.den * b.den, _merge(a.denominators, b.denominators))
        case Div(l, r):
            a, b = to_rational(l), to_rational(r)
            if b.num.is_constant:
                c = b.num.constant_value()
                if c == 0:
                    raise NonPolynomialError("division by zero")
                return RationalForm(a.num * b.den, a.den.scale(c), _merge(a.denominators, b.denominators))
            return RationalForm(a.num * b.den, a.den * b.num, _merge(a.denominators, b.denominators, (b.num,)))
        case Pow(b, e):
            a = to_rational(b)
            return RationalForm(a.num**e, a.den**e, a.denominators)
    raise TypeError(f"not a term: {t!r}")


def _merge(*groups: Iterable[Polynomial]) -> tuple[Polynomial, ...]:
    out: list[Polynomial] = []
    for g in groups:
        for p in g:
            if p not in out:
                out.append(p)
    return tuple(out)


def clear_denominators(t: Term) -> tuple[Polynomial, tuple[Polynomial, ...]]:
    """Numerator of ``t`` after multiplying by its denominators, plus those denominators.

    ``t = 0`` is equivalent to ``num = 0`` whenever every returned denominator is nonzero.
    """
    r = to_rational(t)
    num = r.num
    if r.den.is_constant:
        num = num.scale(1 / r.den.constant_value())
    return num, r.denominators


def to_term(p: Polynomial) -> Term:
    """Readable term for a polynomial, highest degree first."""
    if p.is_zero:
        return Const(0)
    terms = list(p.terms)
    first_pos = next((i for i, (_, c) in enumerate(terms) if c > 0), 0)
    terms.insert(0, terms.pop(first_pos))
    out: Term | None = None
    for m, c in terms:
        factors: list[Term] = [Var(v) if e == 1 else Pow(Var(v), e) for v, e in m]
        mag = abs(c)
        if not factors:
            mono: Term = Const(mag)
        else:
            mono = factors[0]
            for f in factors[1:]:
                mono = Mul(mono, f)
            if mag != 1:
                mono = Mul(Const(mag), mono)
        if out is None:
            out = mono if c > 0 else Neg(mono)
        else:
            out = Add(out, mono) if c > 0 else Sub(out, mono)
    assert out is not None
    return out


@dataclass(frozen=True, slots=True)
class OdeSystem:
    equations: tuple[tuple[str, Polynomial], ...]
    domain: Formula = TRUE

    @staticmethod
    def from_ode(ode: Ode) -> OdeSystem:
        try:
            eqs = tuple((v, to_polynomial(t)) for v, t in ode.eqs)
        except NonPolynomialError as exc:
            raise NonPolynomialError(f"ODE right-hand side must be polynomial: {exc}") from None
        return OdeSystem(eqs, ode.domain)

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(v for v, _ in self.equations)


def _as_system(ode: OdeSystem | Ode) -> OdeSystem:
    return ode if isinstance(ode, OdeSystem) else OdeSystem.from_ode(ode)


def lie_derivative(p: Polynomial, ode: OdeSystem | Ode) -> Polynomial:
    """Sum over ODE variables of the partial derivative times the right-hand side."""
    sys_ = _as_system(ode)
    out = Polynomial()
    for v, rhs in sys_.equations:
        out = out + p.derivative(v) * rhs
    return out


def iterated_lie(p: Polynomial, ode: OdeSystem | Ode, n: int) -> list[Polynomial]:
    """``[L^1(p), ..., L^n(p)]``."""
    sys_ = _as_system(ode)
    out: list[Polynomial] = []
    cur = p
    for _ in range(n):
        cur = lie_derivative(cur, sys_)
        out.append(cur)
    return out


MAX_DRI_ORDER = 4


def dri_vc(
    targets: Iterable[Polynomial | Term],
    ode: OdeSystem | Ode,
    order: int = 1,
    context: Formula = TRUE,
) -> Formula:
    """Premise ``(context & Q) -> AND_{i=1..N} AND_j L^i(h_j) = 0`` of the radical invariant rule.

    Term targets containing divisions are cleared first; each symbolic denominator
    contributes ``den != 0`` on the antecedent side.
    """
    if not 1 <= order <= MAX_DRI_ORDER:
        raise ValueError(f"derivative order must be in 1..{MAX_DRI_ORDER}, got {order}")
    sys_ = _as_system(ode)
    polys: list[Polynomial] = []
    side: list[Formula] = []
    for h in targets:
        if isinstance(h, Polynomial):
            polys.append(h)
            continue
        num, dens = clear_denominators(h)
        polys.append(num)
        for d in dens:
            cond = Not(Cmp("=", to_term(d), Const(0)))
            if cond not in side:
                side.append(cond)
    levels = [iterated_lie(h, sys_, order) for h in polys]
    goals = [Cmp("=", to_term(levels[j][i]), Const(0)) for i in range(order) for j in range(len(polys))]
    return Imply(conj(*_parts(context), *side, *_parts(sys_.domain)), conj(*goals))


def _parts(f: Formula) -> list[Formula]:
    return [] if isinstance(f, TrueF) else [f]


_DERIVED_OP = {"<": "<=", "<=": "<=", "=": "=", ">=": ">=", ">": ">="}
_NEGATED_OP = {"<": ">=", "<=": ">", ">": "<=", ">=": "<"}


def _nnf(f: Formula, positive: bool = True) -> Formula:
    match f:
        case TrueF() | FalseF():
            if positive:
                return f
            return FALSE if isinstance(f, TrueF) else TRUE
        case Cmp(op, l, r):
            if positive:
                return f
            if op == "=":
                raise DerivativeError("a disequality has no differential invariant derivative")
            return Cmp(_NEGATED_OP[op], l, r)
        case Not(a):
            return _nnf(a, not positive)
        case And(l, r):
            return And(_nnf(l, positive), _nnf(r, positive)) if positive else Or(_nnf(l, False), _nnf(r, False))
        case Or(l, r):
            return Or(_nnf(l, positive), _nnf(r, positive)) if positive else And(_nnf(l, False), _nnf(r, False))
        case Imply(l, r):
            return _nnf(Or(Not(l), r), positive)
        case Equiv():
            raise DerivativeError("equivalences must be split before differentiation")
        case Forall() | Exists():
            raise DerivativeError("cannot differentiate a quantified formula")
        case Diamond() | Box():
            raise DerivativeError("cannot differentiate a modal formula")
    raise TypeError(f"not a formula: {f!r}")


def formula_derivative(f: Formula, ode: OdeSystem | Ode) -> Formula:
    """Differential invariant obligation: strict comparisons derive to weak ones, and/or to and."""
    sys_ = _as_system(ode)

    def go(g: Formula) -> Formula:
        match g:
            case TrueF() | FalseF():
                return TRUE
            case Cmp(op, l, r):
                try:
                    lp, rp = to_polynomial(l), to_polynomial(r)
                except NonPolynomialError as exc:
                    raise DerivativeError(f"comparison is not polynomial: {exc}") from None
                return Cmp(_DERIVED_OP[op], to_term(lie_derivative(lp, sys_)), to_term(lie_derivative(rp, sys_)))
            case And(l, r) | Or(l, r):
                return And(go(l), go(r))
        raise TypeError(f"unexpected formula after normalisation: {g!r}")

    return go(_nnf(f))


@dataclass(frozen=True, slots=True)
class DiVc:
    initial: Formula
    step: Formula


def di_vc(f: Formula, ode: OdeSystem | Ode, gamma_const: Formula = TRUE, context: Formula | None = None) -> DiVc:
    """Premises of the differential invariant rule.

    ``initial`` is ``context -> f`` (``context`` defaults to ``gamma_const``);
    ``step`` is ``(Q & gamma_const) -> f'``.
    """
    sys_ = _as_system(ode)
    pre = gamma_const if context is None else context
    initial = Imply(pre, f) if not isinstance(pre, TrueF) else f
    deriv = simplify(formula_derivative(f, sys_))
    hyp = conj(*_parts(sys_.domain), *_parts(gamma_const))
    step = Imply(hyp, deriv) if not isinstance(hyp, TrueF) else deriv
    return DiVc(initial, step)
