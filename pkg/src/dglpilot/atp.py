"""Verification loop: analyze once, then propose a tactic, run the prover and summarize."""

from __future__ import annotations

import re
import threading
import time
from collections.abc import Callable, Generator
from dataclasses import dataclass, field, replace
from typing import Any, Literal

from dglpilot.budget import BudgetExhausted, BudgetLedger, RunCancelled
from dglpilot.checkers import Checkers, truncate_output
from dglpilot.core.ast import Formula
from dglpilot.core.printer import print_formula
from dglpilot.oracle import Oracle, OracleExchange, TransportFailure, extract_code_block
from dglpilot.runs import NullRecorder, RunRecorder
from dglpilot.scheduler import Mode, drive


@dataclass(frozen=True)
class AtpConfig:
    parallel_runs: int = 4
    per_set_budget: float = 12.0
    sets: int = 2
    prover_timeout: float = 300.0
    full_history: bool = False
    max_iter: int = 20
    output_cap: int = 32 * 1024
    call_estimate: float = 0.05
    max_calls_per_set: int | None = None
    scheduler: Mode = "lockstep"

    def __post_init__(self) -> None:
        if self.parallel_runs < 1 or self.sets < 1 or self.max_iter < 1:
            raise ValueError("parallel_runs, sets and max_iter must be positive")
        if self.per_set_budget < 0:
            raise ValueError("per_set_budget must be non-negative")


# ------------------------------------------------------------------ tactic hygiene

_COMMENT_RE = re.compile(r"/\*.*?\*/", re.DOTALL)


@dataclass(frozen=True)
class TacticCheck:
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def _strip_strings(text: str) -> tuple[str, bool]:
    """Replace string literal contents with blanks; report whether every quote closed."""
    out = []
    inside = False
    for ch in text:
        if ch == '"':
            inside = not inside
            out.append(ch)
        else:
            out.append(" " if inside and ch not in "\n" else ch)
    return "".join(out), not inside


def validate_tactic(text: str) -> TacticCheck:
    """ASCII only, no dangling semicolons, no ``>`` after a branch block, balanced delimiters."""
    v: list[str] = []
    if not text.strip():
        return TacticCheck(("empty tactic",))
    if not text.isascii():
        bad = sorted({ch for ch in text if not ch.isascii()})
        v.append(f"non-ASCII characters {bad!r}")
    if text.count("/*") != text.count("*/"):
        v.append("unterminated comment")
    body, quotes_closed = _strip_strings(_COMMENT_RE.sub(" ", text))
    if not quotes_closed:
        v.append("unbalanced double quotes")
    compact = re.sub(r"\s+", "", body)
    if compact.endswith(";"):
        v.append("trailing semicolon at the end of the tactic")
    if re.search(r";[),]", compact):
        v.append("semicolon directly before a closing parenthesis or comma")
    stack: list[tuple[str, int]] = []
    pairs = {")": "(", "}": "{", "]": "["}
    for i, ch in enumerate(compact):
        if ch in "({[":
            kind = "<(" if ch == "(" and i > 0 and compact[i - 1] == "<" else ch
            stack.append((kind, i))
        elif ch in pairs:
            if not stack or stack[-1][0].lstrip("<") != pairs[ch]:
                v.append(f"unbalanced {ch!r}")
                break
            kind, _ = stack.pop()
            if kind == "<(" and compact[i + 1 : i + 2] == ">":
                v.append("branch block closed with ')>' instead of ')'")
    else:
        if stack:
            v.append(f"unclosed {stack[-1][0]!r}")
    return TacticCheck(tuple(dict.fromkeys(v)))


# ------------------------------------------------------------------ run state


@dataclass(frozen=True)
class Attempt:
    tactic: str
    status: str
    outcome: str


@dataclass
class AtpRunState:
    analysis: str = ""
    summary: str = ""
    history: list[Attempt] = field(default_factory=list)
    failed_steps: int = 0


@dataclass(frozen=True)
class Proposal:
    tactic: str
    check: TacticCheck
    fallback: bool


@dataclass
class StepContext:
    problem_text: str
    oracle: Oracle
    budget: BudgetLedger
    stream: str
    recorder: RunRecorder | NullRecorder
    exchanges: list[OracleExchange] = field(default_factory=list)

    def ask(self, template_id: str, **slots: Any) -> OracleExchange:
        prompt = self.oracle.prompt(template_id, **slots)
        ex = self.oracle.ask(prompt, self.budget, self.stream)
        self.exchanges.append(ex)
        self.recorder.exchange(ex, prompt)
        return ex


def step_analyze(ctx: StepContext) -> str:
    return ctx.ask("analyze_game", formula=ctx.problem_text).response.strip()


def step_propose(ctx: StepContext, state: AtpRunState, full_history: bool = False) -> Proposal:
    history = [{"tactic": a.tactic, "outcome": a.outcome} for a in state.history] if full_history else []
    ex = ctx.ask(
        "get_tactic",
        formula=ctx.problem_text,
        analysis=state.analysis,
        summary="" if full_history else state.summary,
        history=history,
    )
    block = extract_code_block(ex.response)
    return Proposal(block.text, validate_tactic(block.text), block.fallback)


def step_summarize(ctx: StepContext, state: AtpRunState, tactic: str, outcome: str) -> str:
    """The new summary, with the tactic appended verbatim if the response dropped it."""
    try:
        ex = ctx.ask(
            "summarize",
            formula=ctx.problem_text,
            analysis=state.analysis,
            summary=state.summary,
            tactic=tactic,
            outcome=outcome,
        )
    except TransportFailure:
        state.failed_steps += 1
        return state.summary
    text = ex.response.strip()
    if tactic not in text:
        text += f"\n\nPrevious Tactic:\n```\n{tactic}\n```"
    return text


# ------------------------------------------------------------------ runs

RunStatus = Literal["proved", "exhausted", "cancelled", "diverged", "error"]


@dataclass(frozen=True)
class RunReport:
    stream: str
    status: RunStatus
    tactic: str | None
    iterations: int
    attempts: tuple[Attempt, ...]
    exchanges: tuple[OracleExchange, ...]
    failed_steps: int = 0
    detail: str = ""

    @property
    def cost(self) -> float:
        return sum(e.cost for e in self.exchanges)

    def to_dict(self) -> dict[str, Any]:
        return {
            "stream": self.stream,
            "status": self.status,
            "tactic": self.tactic,
            "iterations": self.iterations,
            "attempts": [{"tactic": a.tactic, "status": a.status} for a in self.attempts],
            "calls": len(self.exchanges),
            "dollars": round(self.cost, 6),
            "failed_steps": self.failed_steps,
            "detail": self.detail,
        }


def _violation_text(check: TacticCheck, fallback: bool) -> str:
    lines = ["The tactic was rejected before reaching the prover:"]
    lines += [f"- {v}" for v in check.violations]
    if fallback:
        lines.append("- the response had no fenced code block")
    return "\n".join(lines)


def atp_run(
    ctx: StepContext, cfg: AtpConfig, checkers: Checkers, latch: threading.Event
) -> Generator[None, None, RunReport]:
    """One independent pipeline run; yields after every external call."""
    state = AtpRunState()
    attempts: list[Attempt] = []
    iteration = 0

    def report(status: RunStatus, tactic: str | None = None, detail: str = "") -> RunReport:
        r = RunReport(ctx.stream, status, tactic, iteration, tuple(attempts), tuple(ctx.exchanges), state.failed_steps, detail)
        ctx.recorder.result(r.to_dict())
        return r

    prover = checkers.require_prover()
    try:
        if ctx.budget.cancelled():
            raise RunCancelled("cancelled before start")
        state.analysis = step_analyze(ctx)
        yield
        for iteration in range(1, cfg.max_iter + 1):
            prop = step_propose(ctx, state, cfg.full_history)
            yield
            ctx.recorder.tactic(iteration, prop.tactic)
            if not prop.check.ok:
                status, outcome = "rejected", _violation_text(prop.check, prop.fallback)
            else:
                if ctx.budget.cancelled():
                    raise RunCancelled("sibling succeeded")
                out = prover.prove(ctx.problem_text, prop.tactic, cfg.prover_timeout)
                ctx.recorder.prover(iteration, out.raw)
                if out.proved:
                    # raise the latch before yielding so no sibling starts another call
                    latch.set()
                    attempts.append(Attempt(prop.tactic, "proved", ""))
                    return report("proved", prop.tactic)
                yield
                status = out.status
                outcome = truncate_output(out.raw, cfg.output_cap) if out.raw else out.diagnostics
            attempts.append(Attempt(prop.tactic, status, outcome))
            if cfg.full_history:
                state.history.append(attempts[-1])
            else:
                state.summary = step_summarize(ctx, state, prop.tactic, outcome)
                yield
        return report("diverged", detail=f"no proof after {cfg.max_iter} iterations")
    except BudgetExhausted as exc:
        return report("exhausted", detail=str(exc))
    except RunCancelled as exc:
        return report("cancelled", detail=str(exc))
    except TransportFailure as exc:
        return report("error", detail=str(exc))


@dataclass(frozen=True)
class AtpResult:
    status: Literal["proved", "exhausted"]
    tactic: str | None
    winner: str | None
    sets: tuple[tuple[RunReport, ...], ...]
    seconds: float

    @property
    def runs(self) -> tuple[RunReport, ...]:
        return tuple(r for s in self.sets for r in s)

    @property
    def exchanges(self) -> tuple[OracleExchange, ...]:
        return tuple(sorted((e for r in self.runs for e in r.exchanges), key=lambda e: e.seq))

    @property
    def calls(self) -> int:
        return len(self.exchanges)

    @property
    def dollars(self) -> float:
        return sum(e.cost for e in self.exchanges)

    @property
    def proved(self) -> bool:
        return self.status == "proved"

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status,
            "tactic": self.tactic,
            "winner": self.winner,
            "sets_used": len(self.sets),
            "calls": self.calls,
            "dollars": round(self.dollars, 6),
            "minutes": round(sum(e.latency for e in self.exchanges) / 60.0, 4),
            "runs": [r.to_dict() for r in self.runs],
        }


RecorderFactory = Callable[[str], "RunRecorder | NullRecorder"]


def run_verification(
    problem: Formula | str,
    cfg: AtpConfig,
    oracle: Oracle,
    checkers: Checkers,
    recorder_for: RecorderFactory | None = None,
    parent: BudgetLedger | None = None,
    stream_prefix: str = "",
) -> AtpResult:
    """Sets of parallel runs; a set ends on the first proof or when its budget runs out."""
    checkers.require_prover()
    text = problem if isinstance(problem, str) else print_formula(problem)
    start = time.monotonic()
    sets: list[tuple[RunReport, ...]] = []
    for s in range(1, cfg.sets + 1):
        latch = threading.Event()
        if parent is None:
            budget = BudgetLedger(cfg.per_set_budget, cfg.max_calls_per_set, cfg.call_estimate, cancel=latch)
        else:
            budget = parent.child(cfg.per_set_budget, cfg.max_calls_per_set, cancel=latch)
        gens = []
        for k in range(1, cfg.parallel_runs + 1):
            stream = f"{stream_prefix}set{s}/run{k}"
            rec = recorder_for(stream) if recorder_for else NullRecorder()
            gens.append(atp_run(StepContext(text, oracle, budget, stream, rec), cfg, checkers, latch))
        reports = tuple(drive(gens, cfg.scheduler))
        sets.append(reports)
        winner = next((r for r in reports if r.status == "proved"), None)
        if winner is not None:
            return AtpResult("proved", winner.tactic, winner.stream, tuple(sets), time.monotonic() - start)
        if parent is not None and parent.cancelled():
            break
    return AtpResult("exhausted", None, None, tuple(sets), time.monotonic() - start)


def with_config(cfg: AtpConfig, **changes: Any) -> AtpConfig:
    return replace(cfg, **changes)
