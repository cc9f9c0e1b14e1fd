"""Recursive-descent parser for the ASCII dGL syntax.

Games::

    game    := seqgame (('++' | '--') game)?
    seqgame := postfix (';'? postfix)*
    postfix := atom ('*' | '^@')*
    atom    := '{' game '}' | '{' ode '}' | x ':=' ('*' | term) ';'? | '?' formula ';'?

Formulas use the precedence ``!`` > ``&`` > ``|`` > ``->`` > ``<->``; binary
connectives nest to the right.  ``a -- b`` is read as a Demon choice, that is
``{{a}^@ ++ {b}^@}^@``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from dglpilot.core.ast import (
    FALSE,
    TRUE,
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
    Var,
)


class DglSyntaxError(ValueError):
    """Raised on malformed input; carries a 1-based position and expected tokens."""

    def __init__(self, message: str, line: int, column: int, expected: frozenset[str] = frozenset()) -> None:
        self.line = line
        self.column = column
        self.expected = expected
        detail = f" (expected one of: {', '.join(sorted(expected))})" if expected else ""
        super().__init__(f"{message} at line {line}, column {column}{detail}")


@dataclass(frozen=True, slots=True)
class Token:
    kind: str
    text: str
    pos: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|/\*.*?\*/)
  | (?P<num>\d+(?:\.\d+)?|\.\d+)
  | (?P<quant>\\forall|\\exists)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><->|->|<=|>=|!=|:=|\+\+|--|\^@|[-+*/^()<>\[\]{}=;,?!&|'])
    """,
    re.VERBOSE | re.DOTALL,
)

_KEYWORDS = {"true", "false"}


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            line, col = _line_col(text, pos)
            raise DglSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup or ""
        if kind != "ws":
            value = m.group()
            if kind == "ident" and value in _KEYWORDS:
                kind = value
            elif kind in ("op", "quant"):
                kind = value
            tokens.append(Token(kind, value, pos))
        pos = m.end()
    tokens.append(Token("eof", "", len(text)))
    return tokens


def _line_col(text: str, pos: int) -> tuple[int, int]:
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


_CMP = {"<", "<=", "=", ">=", ">", "!="}
_TERM_START = {"num", "ident", "(", "-"}


class _Parser:
    def __init__(self, text: str) -> None:
        if not text.isascii():
            bad = next(i for i, ch in enumerate(text) if ord(ch) > 127)
            line, col = _line_col(text, bad)
            raise DglSyntaxError("non-ASCII input", line, col)
        self.text = text
        self.toks = tokenize(text)
        self.i = 0

    # -- helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, message: str, expected: set[str] | frozenset[str] = frozenset()) -> DglSyntaxError:
        line, col = _line_col(self.text, self.tok.pos)
        found = self.tok.text or "end of input"
        return DglSyntaxError(f"{message}, found {found!r}", line, col, frozenset(expected))

    def accept(self, kind: str) -> Token | None:
        if self.tok.kind == kind:
            t = self.tok
            self.i += 1
            return t
        return None

    def expect(self, kind: str, what: str | None = None) -> Token:
        t = self.accept(kind)
        if t is None:
            raise self.error(f"expected {what or repr(kind)}", {kind})
        return t

    def finish(self) -> None:
        if self.tok.kind != "eof":
            raise self.error("unexpected trailing input", {"eof"})

    # -- terms
    def term(self) -> Term:
        left = self.product()
        while self.tok.kind in ("+", "-", "--"):
            op = self.tok.kind
            self.i += 1
            right = self.product()
            if op == "--":
                right = Neg(right)
            left = Add(left, right) if op == "+" else Sub(left, right)
        return left

    def product(self) -> Term:
        left = self.unary_term()
        while self.tok.kind in ("*", "/"):
            op = self.tok.kind
            self.i += 1
            right = self.unary_term()
            left = Mul(left, right) if op == "*" else Div(left, right)
        return left

    def unary_term(self) -> Term:
        if self.accept("-"):
            return Neg(self.unary_term())
        if self.tok.kind == "--":
            # `--x` inside a term is a double negation
            self.i += 1
            return Neg(Neg(self.unary_term()))
        return self.power()

    def power(self) -> Term:
        base = self.primary_term()
        while self.accept("^"):
            t = self.expect("num", "natural exponent")
            if "." in t.text:
                self.i -= 1
                raise self.error("exponent must be a natural number", {"num"})
            base = Pow(base, int(t.text))
        return base

    def primary_term(self) -> Term:
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Const(Fraction(t.text))
        if t.kind == "ident":
            self.i += 1
            return Var(t.text)
        if self.accept("("):
            inner = self.term()
            self.expect(")")
            return inner
        raise self.error("expected a term", {"num", "ident", "(", "-"})

    # -- formulas
    def formula(self) -> Formula:
        left = self.imply()
        if self.accept("<->"):
            return Equiv(left, self.formula())
        return left

    def imply(self) -> Formula:
        left = self.disjunction()
        if self.accept("->"):
            return Imply(left, self.imply())
        return left

    def disjunction(self) -> Formula:
        left = self.conjunction()
        if self.accept("|"):
            return Or(left, self.disjunction())
        return left

    def conjunction(self) -> Formula:
        left = self.unary()
        if self.accept("&"):
            return And(left, self.conjunction())
        return left

    def unary(self) -> Formula:
        k = self.tok.kind
        if k == "!":
            self.i += 1
            return Not(self.unary())
        if k in ("\\forall", "\\exists"):
            self.i += 1
            name = self.expect("ident", "bound variable").text
            body = self.unary()
            return Forall(name, body) if k == "\\forall" else Exists(name, body)
        if k == "<":
            self.i += 1
            g = self.game()
            self.expect(">", "'>' closing the diamond")
            return Diamond(g, self.unary())
        if k == "[":
            self.i += 1
            g = self.game()
            self.expect("]", "']' closing the box")
            return Box(g, self.unary())
        return self.atom()

    def atom(self) -> Formula:
        if self.accept("true"):
            return TRUE
        if self.accept("false"):
            return FALSE
        if self.tok.kind == "(":
            save = self.i
            try:
                self.i += 1
                inner = self.formula()
                self.expect(")")
                if self.tok.kind not in _CMP and self.tok.kind not in ("+", "-", "*", "/", "^"):
                    return inner
            except DglSyntaxError:
                pass
            self.i = save
        return self.comparison()

    def comparison(self) -> Formula:
        if self.tok.kind not in _TERM_START and self.tok.kind != "--":
            raise self.error("expected a formula", {"!", "(", "<", "[", "true", "false", "\\forall", "\\exists", "num", "ident"})
        left = self.term()
        op = self.tok.kind
        if op not in _CMP:
            raise self.error("expected a comparison operator", _CMP)
        self.i += 1
        right = self.term()
        if self.tok.kind in _CMP:
            raise self.error("comparisons do not chain", {"&", "|", "->"})
        if op == "!=":
            return Not(Cmp("=", left, right))
        return Cmp(op, left, right)

    # -- games
    def game(self) -> Game:
        left = self.seq_game()
        if self.accept("++"):
            return Choice(left, self.game())
        if self.accept("--"):
            right = self.game()
            return Dual(Choice(Dual(left), Dual(right)))
        return left

    def _starts_game(self) -> bool:
        k = self.tok.kind
        return k in ("{", "?") or (k == "ident" and self.peek().kind == ":=")

    def seq_game(self) -> Game:
        items = [self.postfix()]
        while True:
            self.accept(";")
            if not self._starts_game():
                break
            items.append(self.postfix())
        out = items[-1]
        for g in reversed(items[:-1]):
            out = Seq(g, out)
        return out

    def postfix(self) -> Game:
        g = self.atomic_game()
        while True:
            if self.accept("^@"):
                g = Dual(g)
            elif self.accept("*"):
                g = Loop(g)
            else:
                return g

    def atomic_game(self) -> Game:
        t = self.tok
        if t.kind == "{":
            self.i += 1
            if self.tok.kind == "ident" and self.peek().kind == "'":
                g: Game = self.ode()
            else:
                g = self.game()
            self.expect("}", "'}'")
            return g
        if t.kind == "?":
            self.i += 1
            cond = self.formula()
            self.accept(";")
            return Test(cond)
        if t.kind == "ident" and self.peek().kind == ":=":
            self.i += 2
            if self.accept("*"):
                node: Game = AssignAny(t.text)
            else:
                node = Assign(t.text, self.term())
            self.accept(";")
            return node
        raise self.error("expected a game", {"{", "?", "ident"})

    def ode(self) -> Ode:
        eqs: list[tuple[str, Term]] = []
        while True:
            name = self.expect("ident", "ODE variable").text
            self.expect("'", "prime")
            self.expect("=")
            eqs.append((name, self.term()))
            if not self.accept(","):
                break
        domain = self.formula() if self.accept("&") else TRUE
        try:
            return Ode(tuple(eqs), domain)
        except ValueError as exc:
            raise self.error(str(exc)) from None


def parse_game(text: str) -> Game:
    p = _Parser(text)
    g = p.game()
    p.finish()
    return g


def parse_formula(text: str) -> Formula:
    p = _Parser(text)
    f = p.formula()
    p.finish()
    return f


def parse_term(text: str) -> Term:
    p = _Parser(text)
    t = p.term()
    p.finish()
    return t
