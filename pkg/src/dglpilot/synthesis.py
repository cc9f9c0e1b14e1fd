"""Synthesis loop: analyze and plan, then guess and check subvalues backwards with recovery."""

from __future__ import annotations

import threading
import time
from collections.abc import Generator, Sequence
from dataclasses import dataclass, field
from typing import Any, Literal

from dglpilot.atp import AtpConfig, RecorderFactory, StepContext, run_verification
from dglpilot.budget import BudgetExhausted, BudgetLedger, RunCancelled
from dglpilot.checkers import Checkers, CheckResult, ToolUnavailable, counterexample_text
from dglpilot.core.ast import Diamond, Formula, Game, Loop
from dglpilot.core.labels import LabeledGame, PlayerMap, attribute_players, label_subgames, node_at
from dglpilot.core.parser import DglSyntaxError, parse_formula
from dglpilot.core.printer import print_formula, print_game
from dglpilot.engine import (
    CloseLoopRequest,
    EngineError,
    GuessRequest,
    PassState,
    SubvalueMap,
    UnsupportedConstruct,
    VcRecord,
    accept_failed,
    attach_guess,
    backtrack_to,
    close_loop,
    record_checks,
    render_policy,
    run_to_request,
    start_pass,
)
from dglpilot.oracle import Oracle, OracleExchange, ProtocolViolation, TransportFailure, extract_code_block, parse_next_action
from dglpilot.runs import NullRecorder
from dglpilot.scheduler import Mode, drive

RecoveryMode = Literal["llm_guided", "dfs_fallback"]

_GUESS_TEMPLATE = {
    "loop": "guess_loop_invariant",
    "ode": "guess_ode_subvalue",
    "assign_any": "guess_assign_subvalue",
}


@dataclass(frozen=True)
class SynthConfig:
    parallel_runs: int = 4
    total_budget: float = 10.0
    recovery_mode: RecoveryMode = "llm_guided"
    dfs_branching: int = 3
    guideline: str = ""
    max_guesses: int = 60
    lemma_budget: float = 1.0
    lemma_calls: int = 10
    lemma_iterations: int = 10
    call_estimate: float = 0.05
    scheduler: Mode = "lockstep"

    def __post_init__(self) -> None:
        if self.parallel_runs < 1 or self.dfs_branching < 1:
            raise ValueError("parallel_runs and dfs_branching must be positive")
        if self.recovery_mode not in ("llm_guided", "dfs_fallback"):
            raise ValueError(f"unknown recovery mode {self.recovery_mode!r}")


@dataclass(frozen=True)
class VcAuditEntry:
    origin: str
    purpose: str
    status: str
    tool: str
    seconds: float
    via: str = ""


@dataclass(frozen=True)
class GuessAudit:
    """One guess at a node; ``chain`` lists the (id, round) decisions up to and including it."""

    subgame: str
    round: int
    formula: str
    ok: bool
    chain: tuple[tuple[str, int], ...]
    vcs: tuple[VcAuditEntry, ...] = ()


@dataclass(frozen=True)
class RunOutcome:
    stream: str
    status: Literal["solved", "exhausted", "cancelled", "aborted", "error"]
    smap: SubvalueMap | None
    policy: str
    precondition: str
    trail: tuple[GuessAudit, ...]
    exchanges: tuple[OracleExchange, ...]
    vcs: tuple[VcRecord, ...]
    detail: str = ""

    @property
    def cost(self) -> float:
        return sum(e.cost for e in self.exchanges)

    def to_dict(self) -> dict[str, Any]:
        return {
            "stream": self.stream,
            "status": self.status,
            "precondition": self.precondition,
            "policy": self.policy,
            "subvalues": self.smap.to_lines() if self.smap is not None else "",
            "guesses": [
                {"subgame": g.subgame, "round": g.round, "formula": g.formula, "ok": g.ok} for g in self.trail
            ],
            "calls": len(self.exchanges),
            "dollars": round(self.cost, 6),
            "detail": self.detail,
        }


@dataclass(frozen=True)
class SynthOutcome:
    status: Literal["solved", "exhausted"]
    smap: SubvalueMap | None
    policy: str
    runs: tuple[RunOutcome, ...]
    seconds: float
    guideline: str

    def __post_init__(self) -> None:
        if self.status == "solved":
            assert self.smap is not None
            bad = [e.subgame for e in self.smap.entries if e.provenance not in ("symbolic", "checked-valid")]
            if bad:
                raise ValueError(f"solved map has unchecked entries: {bad}")

    @property
    def winner(self) -> RunOutcome | None:
        return next((r for r in self.runs if r.status == "solved"), None)

    @property
    def exchanges(self) -> tuple[OracleExchange, ...]:
        return tuple(sorted((e for r in self.runs for e in r.exchanges), key=lambda e: e.seq))

    @property
    def calls(self) -> int:
        return len(self.exchanges)

    @property
    def dollars(self) -> float:
        return sum(e.cost for e in self.exchanges)

    def to_dict(self) -> dict[str, Any]:
        w = self.winner
        return {
            "status": self.status,
            "guideline": self.guideline,
            "winner": w.stream if w else None,
            "policy": self.policy,
            "subvalue_report": self.smap.to_lines() if self.smap is not None else "",
            "vc_audit": [a.__dict__ for g in (w.trail if w else ()) for a in g.vcs],
            "calls": self.calls,
            "dollars": round(self.dollars, 6),
            "minutes": round(sum(e.latency for e in self.exchanges) / 60.0, 4),
            "runs": [r.to_dict() for r in self.runs],
        }


# ------------------------------------------------------------------ DFS fallback


@dataclass(frozen=True)
class DfsMove:
    subgame: str
    attempt: int


def dfs_fallback_policy(trail: Sequence[GuessAudit], branching: int = 3) -> DfsMove | None:
    """Deepest node on the current chain with fewer than ``branching`` attempts, or None.

    Attempts at a chain position count only guesses made under the same earlier decisions, so
    a node that was backtracked past starts over on its next visit.
    """
    if not trail:
        return None
    chain = trail[-1].chain
    for i in range(len(chain) - 1, -1, -1):
        sid = chain[i][0]
        prefix = chain[:i]
        tried = sum(1 for g in trail if g.subgame == sid and g.chain[:i] == prefix and len(g.chain) > i)
        if tried < branching:
            return DfsMove(sid, tried + 1)
    return None


# ------------------------------------------------------------------ problem setup


@dataclass(frozen=True)
class SynthProblem:
    formula: Formula
    game: Game
    post: Formula
    lg: LabeledGame
    players: PlayerMap

    @property
    def labeled_text(self) -> str:
        return self.lg.print_labeled()


def prepare(problem: Formula | str) -> SynthProblem:
    f = parse_formula(problem) if isinstance(problem, str) else problem
    if not isinstance(f, Diamond):
        raise UnsupportedConstruct("synthesis expects a formula of the form <game>post")
    lg = label_subgames(f.game)
    players = attribute_players(lg, "diamond")
    for path, sid in lg.labels.items():
        if isinstance(node_at(lg.game, path), Loop) and players[sid] == "angel":
            raise UnsupportedConstruct(f"subgame_{sid}: Angel-controlled loops are not supported")
    return SynthProblem(f, f.game, f.body, lg, players)


# ------------------------------------------------------------------ one run


@dataclass
class _Run:
    problem: SynthProblem
    cfg: SynthConfig
    ctx: StepContext
    checkers: Checkers
    oracle: Oracle
    recorder_for: RecorderFactory | None
    analysis: str = ""
    strategy: str = ""
    log: list[str] = field(default_factory=list)
    trail: list[GuessAudit] = field(default_factory=list)
    guesses: int = 0
    lemmas: int = 0

    def check(self, state: PassState) -> tuple[PassState, list[VcAuditEntry], bool]:
        results: list[CheckResult] = []
        audits: list[VcAuditEntry] = []
        for rec in state.pending_vcs:
            r = self.checkers.check_vc(rec.vc)
            results.append(r)
            audits.append(VcAuditEntry(rec.vc.origin, rec.vc.purpose, r.status, r.tool, round(r.wall_time, 3), r.reason))
            if not r.valid:
                cex = counterexample_text(r.counterexample)
                self.log.append(
                    f"Check of the {rec.vc.purpose} condition for subgame_{rec.vc.origin} did not succeed ({r.status})."
                    + (f" Counterexample: {cex}." if cex else "")
                    + " The formula is wrong or beyond the current automation."
                )
        state = record_checks(state, [r.valid for r in results])
        return state, audits, all(r.valid for r in results)

    def guess_slots(self, req: GuessRequest) -> dict[str, Any]:
        shown = req.node.body if isinstance(req.node, Loop) else req.node
        return {
            "subgame": f"subgame_{req.subgame}: {print_game(shown)}",
            "postcondition": print_formula(req.successor_post),
            "game": self.problem.labeled_text,
            "analysis": self.analysis,
            "strategy": self.strategy,
            "log": "\n".join(self.log),
        }

    def recover_llm(self, state: PassState, current: str) -> PassState | None:
        """Ask for try-proof or a backtrack target; None means the caller should try again."""
        ids = [current]
        for d in reversed(state.decisions):
            if d.subgame not in ids:
                ids.append(d.subgame)
        options = ["try-proof"] + [f"backtrack-to:{i}" for i in ids]
        slots = {
            "subgame_id": current,
            "subgame": print_game(self.problem.lg.node(current)),
            "game": self.problem.labeled_text,
            "analysis": self.analysis,
            "strategy": self.strategy,
            "log": "\n".join(self.log),
            "options": options,
        }
        action = None
        for _ in range(2):
            ex = self.ctx.ask("next_action", **slots)
            try:
                action = parse_next_action(extract_code_block(ex.response).text, ids)
                break
            except ProtocolViolation as exc:
                self.log.append(f"Unusable action reply: {exc}.")
        if action is None:
            self.log.append(f"Retrying subgame_{current} after two unusable replies.")
            return backtrack_to(state, current)
        if action.kind == "backtrack_to":
            assert action.target is not None
            self.log.append(f"Backtracking to subgame_{action.target}.")
            return backtrack_to(state, action.target)
        return self.try_proof(state, current)

    def try_proof(self, state: PassState, current: str) -> PassState | None:
        failed = [r for r in state.vcs if r.status == "failed"]
        budget = self.ctx.budget
        for rec in failed:
            self.lemmas += 1
            lemma_cfg = AtpConfig(
                parallel_runs=1,
                sets=1,
                per_set_budget=min(self.cfg.lemma_budget, budget.remaining),
                max_calls_per_set=self.cfg.lemma_calls,
                max_iter=self.cfg.lemma_iterations,
                call_estimate=self.cfg.call_estimate,
                scheduler="lockstep",
            )
            res = run_verification(
                rec.vc.formula,
                lemma_cfg,
                self.oracle,
                self.checkers,
                self.recorder_for,
                parent=budget,
                stream_prefix=f"{self.ctx.stream}/lemma{self.lemmas}/",
            )
            self.ctx.exchanges.extend(res.exchanges)
            if budget.cancelled():
                raise RunCancelled("sibling succeeded")
            if not res.proved:
                self.log.append(f"A full proof attempt for subgame_{rec.vc.origin} did not succeed.")
                return None
            self.log.append(f"A full proof attempt for subgame_{rec.vc.origin} succeeded.")
        return accept_failed(state)

    def recover_dfs(self, state: PassState) -> PassState:
        move = dfs_fallback_policy(self.trail, self.cfg.dfs_branching)
        if move is None:
            raise BudgetExhausted("every guess node used its attempts")
        self.log.append(f"Retrying subgame_{move.subgame} (attempt {move.attempt}).")
        return backtrack_to(state, move.subgame)


def _chain(state: PassState) -> tuple[tuple[str, int], ...]:
    return tuple((d.subgame, d.round) for d in state.decisions)


def synth_run(run: _Run, latch: threading.Event) -> Generator[None, None, RunOutcome]:
    ctx = run.ctx
    state: PassState | None = None

    def finish(status: Any, detail: str = "", solved: bool = False) -> RunOutcome:
        smap = state.subvalue_map if state is not None and solved else None
        policy = render_policy(smap, run.problem.lg, run.problem.players) if smap is not None else ""
        pre = print_formula(state.result) if solved and state is not None else ""
        out = RunOutcome(
            ctx.stream,
            status,
            smap,
            policy,
            pre,
            tuple(run.trail),
            tuple(ctx.exchanges),
            state.vcs if state is not None else (),
            detail,
        )
        ctx.recorder.result(out.to_dict())
        return out

    try:
        if ctx.budget.cancelled():
            raise RunCancelled("cancelled before start")
        run.analysis = ctx.ask("analyze_game", formula=run.problem.labeled_text).response.strip()
        yield
        run.strategy = ctx.ask(
            "plan_control_strategy",
            game=run.problem.labeled_text,
            postcondition=print_formula(run.problem.post),
            analysis=run.analysis,
            guideline=run.cfg.guideline,
        ).response.strip()
        yield
        state = start_pass(run.problem.lg, run.problem.players, run.problem.post)
        while True:
            state, req = run_to_request(state)
            if req is None:
                latch.set()
                return finish("solved", solved=True)
            if isinstance(req, CloseLoopRequest):
                state, _ = close_loop(state)
                state, audits, ok = run.check(state)
                if run.trail:
                    last = run.trail[-1]
                    run.trail[-1] = GuessAudit(last.subgame, last.round, last.formula, last.ok and ok, last.chain, last.vcs + tuple(audits))
                yield
                if ok:
                    run.log.append(f"Loop invariant of subgame_{req.subgame} is inductive.")
                    continue
                state = yield from _recover(run, state, req.subgame)
                continue
            if run.guesses >= run.cfg.max_guesses:
                return finish("exhausted", f"guess limit {run.cfg.max_guesses} reached")
            run.guesses += 1
            ex = ctx.ask(_GUESS_TEMPLATE[req.kind], **run.guess_slots(req))
            text = extract_code_block(ex.response).text
            yield
            try:
                formula = parse_formula(text)
            except DglSyntaxError as exc:
                run.log.append(f"Proposal for subgame_{req.subgame} did not parse: {exc}.")
                chain = _chain(state) + ((req.subgame, req.round),)
                run.trail.append(GuessAudit(req.subgame, req.round, text, False, chain))
                state = yield from _recover(run, state, req.subgame, attached=False)
                continue
            kind = "loop invariant" if req.kind == "loop" else "subvalue"
            run.log.append(
                f"Proposed {kind} for subgame_{req.subgame} with postcondition {print_formula(req.successor_post)}: "
                f"{print_formula(formula)}"
            )
            state = attach_guess(state, req.subgame, formula)
            state, audits, ok = run.check(state)
            yield
            run.trail.append(GuessAudit(req.subgame, req.round, print_formula(formula), ok, _chain(state), tuple(audits)))
            run.log.append(f"Check succeeded: {'yes' if ok else 'no'}.")
            if not ok:
                state = yield from _recover(run, state, req.subgame)
    except BudgetExhausted as exc:
        return finish("exhausted", str(exc))
    except RunCancelled as exc:
        return finish("cancelled", str(exc))
    except (UnsupportedConstruct, EngineError) as exc:
        return finish("aborted", str(exc))
    except TransportFailure as exc:
        return finish("error", str(exc))


def _recover(run: _Run, state: PassState, current: str, attached: bool = True) -> Generator[None, None, PassState]:
    """Recovery until the pass can continue."""
    if not attached:
        # a proposal that did not parse: re-open the pending guess
        if run.cfg.recovery_mode == "dfs_fallback":
            return run.recover_dfs(state)
        return backtrack_to(state, current)
    while True:
        if run.cfg.recovery_mode == "dfs_fallback":
            return run.recover_dfs(state)
        nxt = run.recover_llm(state, current)
        yield
        if nxt is not None:
            return nxt


# ------------------------------------------------------------------ driver


def run_synthesis(
    problem: Formula | str,
    cfg: SynthConfig,
    oracle: Oracle,
    checkers: Checkers,
    recorder_for: RecorderFactory | None = None,
) -> SynthOutcome:
    """Parallel runs over one shared budget; the first solved run cancels the others."""
    checkers.require_smt()
    if checkers.prover is None:
        raise ToolUnavailable("synthesis needs a prover for modal checks and proof attempts")
    prob = prepare(problem)
    start = time.monotonic()
    latch = threading.Event()
    budget = BudgetLedger(cfg.total_budget, estimate=cfg.call_estimate, cancel=latch)
    gens = []
    for k in range(1, cfg.parallel_runs + 1):
        stream = f"run{k}"
        rec = recorder_for(stream) if recorder_for else NullRecorder()
        ctx = StepContext(prob.labeled_text, oracle, budget, stream, rec)
        gens.append(synth_run(_Run(prob, cfg, ctx, checkers, oracle, recorder_for), latch))
    outcomes = tuple(drive(gens, cfg.scheduler))
    win = next((o for o in outcomes if o.status == "solved"), None)
    if win is not None:
        return SynthOutcome("solved", win.smap, win.policy, outcomes, time.monotonic() - start, cfg.guideline)
    return SynthOutcome("exhausted", None, "", outcomes, time.monotonic() - start, cfg.guideline)
