"""SMT-LIB v2 encoding of arithmetic VCs and a solver subprocess driver."""

from __future__ import annotations

import subprocess
import threading
import time
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Literal

from dglpilot.core.analysis import free_vars, term_vars
from dglpilot.core.ast import (
    Add,
    And,
    Cmp,
    Const,
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
    Var,
    has_quantifier,
    is_modal,
)
from dglpilot.core.evaluate import EvaluationError, eval_formula

Status = Literal["valid", "invalid", "unknown", "error"]


class SmtEncodingError(ValueError):
    """Formula outside the arithmetic fragment the encoder accepts."""


class ToolUnavailable(RuntimeError):
    """A configured external tool is missing or cannot be launched."""


@dataclass(frozen=True)
class CheckResult:
    status: Status
    tool: Literal["smt", "prover"]
    wall_time: float = 0.0
    counterexample: Mapping[str, Fraction] | None = None
    reason: str = ""
    transcript: str = ""

    @property
    def valid(self) -> bool:
        return self.status == "valid"


# ---------------------------------------------------------------- process cap

_limit_lock = threading.Lock()
_process_slots = threading.BoundedSemaphore(4)


def set_process_limit(n: int) -> None:
    """Cap on concurrently running external checker processes."""
    global _process_slots
    if n < 1:
        raise ValueError("process limit must be positive")
    with _limit_lock:
        _process_slots = threading.BoundedSemaphore(n)


def process_slot() -> threading.BoundedSemaphore:
    return _process_slots


# ---------------------------------------------------------------- encoding


def _sym(name: str) -> str:
    return f"|{name}|"


def _num(v: Fraction) -> str:
    if v < 0:
        return f"(- {_num(-v)})"
    if v.denominator == 1:
        return f"{v.numerator}.0"
    return f"(/ {v.numerator}.0 {v.denominator}.0)"


def term_to_smt(t: Term) -> str:
    match t:
        case Var(name):
            return _sym(name)
        case Const(v):
            return _num(v)
        case Neg(a):
            return f"(- {term_to_smt(a)})"
        case Add(l, r):
            return f"(+ {term_to_smt(l)} {term_to_smt(r)})"
        case Sub(l, r):
            return f"(- {term_to_smt(l)} {term_to_smt(r)})"
        case Mul(l, r):
            return f"(* {term_to_smt(l)} {term_to_smt(r)})"
        case Div(l, r):
            if isinstance(r, Const) and r.value == 0:
                raise SmtEncodingError("division by the literal 0")
            return f"(/ {term_to_smt(l)} {term_to_smt(r)})"
        case Pow(b, e):
            if e == 0:
                return "1.0"
            base = term_to_smt(b)
            return base if e == 1 else "(* " + " ".join([base] * e) + ")"
    raise TypeError(f"not a term: {t!r}")


def _denominators(t: Term) -> list[Term]:
    match t:
        case Div(l, r):
            return _denominators(l) + _denominators(r) + [r]
        case Add(l, r) | Sub(l, r) | Mul(l, r):
            return _denominators(l) + _denominators(r)
        case Neg(a) | Pow(a, _):
            return _denominators(a)
    return []


def _formula_dens(f: Formula) -> list[Term]:
    """Denominators of ``f`` not under a quantifier binding one of their variables."""
    match f:
        case Cmp(_, l, r):
            return _denominators(l) + _denominators(r)
        case Not(a):
            return _formula_dens(a)
        case And(l, r) | Or(l, r) | Imply(l, r) | Equiv(l, r):
            return _formula_dens(l) + _formula_dens(r)
        case Forall(v, b) | Exists(v, b):
            return [d for d in _formula_dens(b) if v not in term_vars(d)]
    return []


def _guards(dens: Sequence[Term]) -> list[str]:
    out: list[str] = []
    for d in dens:
        g = f"(not (= {term_to_smt(d)} 0.0))"
        if g not in out:
            out.append(g)
    return out


def _scoped(f: Formula) -> str:
    match f:
        case TrueF():
            return "true"
        case FalseF():
            return "false"
        case Cmp(op, l, r):
            return f"({op} {term_to_smt(l)} {term_to_smt(r)})"
        case Not(a):
            return f"(not {_scoped(a)})"
        case And(l, r):
            return f"(and {_scoped(l)} {_scoped(r)})"
        case Or(l, r):
            return f"(or {_scoped(l)} {_scoped(r)})"
        case Imply(l, r):
            return f"(=> {_scoped(l)} {_scoped(r)})"
        case Equiv(l, r):
            return f"(= {_scoped(l)} {_scoped(r)})"
        case Forall(v, b) | Exists(v, b):
            local = [d for d in _formula_dens(b) if v in term_vars(d)]
            body = _scoped(b)
            guards = _guards(local)
            if isinstance(f, Forall):
                if guards:
                    body = f"(=> {_conj(guards)} {body})"
                return f"(forall (({_sym(v)} Real)) {body})"
            if guards:
                body = f"(and {_conj(guards)} {body})"
            return f"(exists (({_sym(v)} Real)) {body})"
    raise SmtEncodingError(f"formula is not arithmetic: {type(f).__name__}")


def _conj(parts: Sequence[str]) -> str:
    return parts[0] if len(parts) == 1 else "(and " + " ".join(parts) + ")"


def encode_formula(f: Formula) -> str:
    """The formula as one SMT-LIB term, with top-level division guards as an antecedent."""
    if is_modal(f):
        raise SmtEncodingError("modal formulas go to the hybrid prover")
    body = _scoped(f)
    guards = _guards(_formula_dens(f))
    return f"(=> {_conj(guards)} {body})" if guards else body


def formula_to_smt(f: Formula) -> str:
    """Script whose answer is unsat exactly when ``f`` is valid."""
    encoded = encode_formula(f)
    logic = "NRA" if has_quantifier(f) else "QF_NRA"
    lines = ["(set-option :produce-models true)", f"(set-logic {logic})"]
    lines += [f"(declare-const {_sym(v)} Real)" for v in sorted(free_vars(f))]
    lines += [f"(assert (not {encoded}))", "(check-sat)", "(get-info :reason-unknown)", "(get-model)"]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- model parsing


def parse_sexprs(text: str) -> list:
    """Tolerant s-expression reader: lists become Python lists, atoms stay strings."""
    tokens: list[str] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            tokens.append(ch)
            i += 1
        elif ch == '"':
            j = text.find('"', i + 1)
            j = len(text) - 1 if j < 0 else j
            tokens.append(text[i : j + 1])
            i = j + 1
        elif ch == "|":
            j = text.find("|", i + 1)
            j = len(text) - 1 if j < 0 else j
            tokens.append(text[i : j + 1])
            i = j + 1
        elif ch == ";":
            j = text.find("\n", i)
            i = len(text) if j < 0 else j
        else:
            j = i
            while j < len(text) and not text[j].isspace() and text[j] not in '()"|;':
                j += 1
            tokens.append(text[i:j])
            i = j
    out: list = []
    stack: list[list] = [out]
    for tok in tokens:
        if tok == "(":
            new: list = []
            stack[-1].append(new)
            stack.append(new)
        elif tok == ")":
            if len(stack) > 1:
                stack.pop()
        else:
            stack[-1].append(tok)
    return out


def _value(expr) -> Fraction | None:
    if isinstance(expr, str):
        try:
            return Fraction(expr)
        except ValueError:
            return None
    if not expr:
        return None
    head = expr[0]
    if head == "-" and len(expr) == 2:
        v = _value(expr[1])
        return None if v is None else -v
    if head == "/" and len(expr) == 3:
        a, b = _value(expr[1]), _value(expr[2])
        if a is None or b is None or b == 0:
            return None
        return a / b
    return None


def parse_model(text: str) -> dict[str, Fraction]:
    """Exact values of nullary real definitions; irrational (root-obj) values are skipped."""
    out: dict[str, Fraction] = {}

    def walk(node) -> None:
        if isinstance(node, list):
            if len(node) == 5 and node[0] == "define-fun" and node[2] == [] and node[3] == "Real":
                name = node[1].strip("|")
                v = _value(node[4])
                if v is not None:
                    out[name] = v
                return
            for n in node:
                walk(n)

    walk(parse_sexprs(text))
    return out


def confirm_counterexample(f: Formula, model: Mapping[str, Fraction]) -> dict[str, Fraction] | None:
    """The model completed with zeros, if it falsifies quantifier-free ``f`` exactly."""
    if has_quantifier(f) or is_modal(f):
        return None
    env = {v: Fraction(0) for v in free_vars(f)}
    env.update({k: v for k, v in model.items() if k in env})
    try:
        return env if not eval_formula(f, env) else None
    except EvaluationError:
        return None


# ---------------------------------------------------------------- driver


@dataclass(frozen=True)
class SmtSolver:
    """An SMT-LIB solver reading a script on stdin."""

    path: str
    args: tuple[str, ...] = ("-in", "-smt2")
    timeout_flag: str | None = "-t:{ms}"
    grace: float = 5.0
    extra_env: Mapping[str, str] = field(default_factory=dict)

    def command(self, timeout: float) -> list[str]:
        cmd = [self.path, *self.args]
        if self.timeout_flag:
            cmd.append(self.timeout_flag.format(ms=max(1, int(timeout * 1000)), s=max(1, int(timeout + 0.999))))
        return cmd

    def run(self, script: str, timeout: float) -> tuple[str, bool]:
        """Solver stdout and whether the wall-clock limit was hit."""
        with process_slot():
            try:
                proc = subprocess.run(
                    self.command(timeout),
                    input=script,
                    capture_output=True,
                    text=True,
                    timeout=timeout + self.grace,
                )
            except FileNotFoundError as exc:
                raise ToolUnavailable(f"SMT solver not found: {self.path}") from exc
            except PermissionError as exc:
                raise ToolUnavailable(f"SMT solver not executable: {self.path}") from exc
            except subprocess.TimeoutExpired as exc:
                out = exc.stdout or ""
                return out if isinstance(out, str) else out.decode(errors="replace"), True
        return proc.stdout + proc.stderr, False


def _first_answer(text: str) -> str | None:
    for line in text.splitlines():
        word = line.strip()
        if word in ("sat", "unsat", "unknown", "timeout"):
            return word
    return None


def check_arith(f: Formula, solver: SmtSolver, timeout: float = 30.0) -> CheckResult:
    """Decide validity of a modality-free formula via the negation's satisfiability."""
    start = time.monotonic()
    try:
        script = formula_to_smt(f)
    except SmtEncodingError as exc:
        return CheckResult("error", "smt", 0.0, reason=str(exc))
    out, timed_out = solver.run(script, timeout)
    elapsed = time.monotonic() - start
    answer = _first_answer(out)
    if timed_out:
        return CheckResult("unknown", "smt", elapsed, reason="timeout", transcript=out)
    if answer == "unsat":
        return CheckResult("valid", "smt", elapsed, transcript=out)
    if answer == "sat":
        cex = confirm_counterexample(f, parse_model(out))
        return CheckResult("invalid", "smt", elapsed, counterexample=cex, transcript=out)
    if answer in ("unknown", "timeout"):
        low = out.lower()
        reason = "timeout" if ("timeout" in low or "canceled" in low) else "incomplete"
        return CheckResult("unknown", "smt", elapsed, reason=reason, transcript=out)
    return CheckResult("error", "smt", elapsed, reason="malformed solver output", transcript=out)
