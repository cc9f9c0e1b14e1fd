"""Backward precondition pass over a labeled game, with guess points, VCs and backtracking.

Work is kept on an explicit task stack so the pass can pause at every guess point
and resume once the oracle has answered and the emitted VCs have been checked.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from typing import Literal, Union

from dglpilot.core.analysis import free_vars, substitute
from dglpilot.core.ast import (
    TRUE,
    And,
    Assign,
    AssignAny,
    Box,
    Choice,
    Cmp,
    Const,
    Diamond,
    Dual,
    Exists,
    Forall,
    Formula,
    Game,
    Imply,
    Loop,
    Ode,
    Or,
    Seq,
    Test,
    conj,
    conjuncts,
    is_modal,
)
from dglpilot.core.labels import LabeledGame, Path, Player, PlayerMap, node_at
from dglpilot.core.printer import print_formula, print_game
from dglpilot.core.simplify import simplify
from dglpilot.diffmath import DerivativeError, NonPolynomialError, OdeSystem, formula_derivative

END_ID = "end"
DEFAULT_MAX_LOOP_DEPTH = 4

Provenance = Literal["symbolic", "guessed", "checked-valid", "checked-failed"]
Purpose = Literal["guess-justification", "loop-inductive", "loop-exit"]
GuessKind = Literal["loop", "ode", "assign_any"]
VcStatus = Literal["pending", "valid", "failed"]


class EngineError(RuntimeError):
    """Misuse of the pass protocol."""


class UnsupportedConstruct(EngineError):
    """A construct the backward pass deliberately does not handle."""


@dataclass(frozen=True, slots=True)
class SubvalueEntry:
    subgame: str
    formula: Formula
    provenance: Provenance
    guess_round: int = 0
    successor_post: Formula | None = None

    def __post_init__(self) -> None:
        if self.provenance == "symbolic" and self.guess_round != 0:
            raise ValueError("symbolic entries carry guess_round 0")
        if self.provenance != "symbolic" and self.guess_round < 1:
            raise ValueError("guessed entries carry guess_round >= 1")


@dataclass(frozen=True, slots=True)
class VC:
    formula: Formula
    kind: Literal["arithmetic", "modal"]
    origin: str
    purpose: Purpose
    reductions: tuple[tuple[str, Formula], ...] = ()

    def __post_init__(self) -> None:
        if (self.kind == "arithmetic") == is_modal(self.formula):
            raise ValueError("kind must be arithmetic exactly when the formula is modality-free")

    @staticmethod
    def make(formula: Formula, origin: str, purpose: Purpose, reductions: Iterable[tuple[str, Formula]] = ()) -> VC:
        return VC(formula, "modal" if is_modal(formula) else "arithmetic", origin, purpose, tuple(reductions))


@dataclass(frozen=True, slots=True)
class VcRecord:
    vc: VC
    status: VcStatus = "pending"


@dataclass(frozen=True)
class SubvalueMap:
    """Entries in the order they were computed, which is reverse game order; ``end`` comes first."""

    entries: tuple[SubvalueEntry, ...]
    postcondition: Formula

    def __post_init__(self) -> None:
        ids = [e.subgame for e in self.entries]
        if len(ids) != len(set(ids)):
            raise ValueError("at most one live entry per subgame")

    def get(self, sid: str) -> SubvalueEntry | None:
        for e in self.entries:
            if e.subgame == sid:
                return e
        return None

    def formula_of(self, sid: str) -> Formula:
        e = self.get(sid)
        if e is None:
            raise KeyError(sid)
        return e.formula

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(e.subgame for e in self.entries)

    def to_lines(self) -> str:
        """One tab-separated line per entry: id, provenance, formula."""
        return "".join(f"{e.subgame}\t{e.provenance}\t{print_formula(e.formula)}\n" for e in self.entries)

    def report(self, lg: LabeledGame | None = None) -> str:
        lines = ["# Subvalue map", ""]
        for e in self.entries:
            tag = e.provenance if e.provenance == "symbolic" else f"{e.provenance}, round {e.guess_round}"
            where = ""
            if lg is not None and e.subgame in lg.paths:
                where = f" `{_short(print_game(lg.node(e.subgame)))}`"
            lines.append(f"- subgame_{e.subgame}{where} [{tag}]")
            lines.append(f"    {print_formula(e.formula)}")
        return "\n".join(lines) + "\n"


def _short(text: str, limit: int = 60) -> str:
    return text if len(text) <= limit else text[: limit - 3] + "..."


@dataclass(frozen=True, slots=True)
class GuessRequest:
    subgame: str
    kind: GuessKind
    player: Player
    node: Game
    path: Path
    successor_post: Formula
    loop_invariants: tuple[tuple[str, Formula], ...]
    round: int


@dataclass(frozen=True, slots=True)
class CloseLoopRequest:
    subgame: str


@dataclass(frozen=True, slots=True)
class Decision:
    subgame: str
    formula: Formula
    round: int


# tasks on the stack; a missing post means "pop it from the value stack"
@dataclass(frozen=True, slots=True)
class _Visit:
    path: Path
    post: Formula | None


@dataclass(frozen=True, slots=True)
class _Finish:
    path: Path


@dataclass(frozen=True, slots=True)
class _Combine:
    path: Path


@dataclass(frozen=True, slots=True)
class _CloseLoop:
    path: Path
    invariant: Formula


_Task = Union[_Visit, _Finish, _Combine, _CloseLoop]


@dataclass(frozen=True)
class PassState:
    lg: LabeledGame
    players: PlayerMap
    post: Formula
    tasks: tuple[_Task, ...]
    values: tuple[Formula, ...] = ()
    entries: tuple[SubvalueEntry, ...] = ()
    vcs: tuple[VcRecord, ...] = ()
    loop_stack: tuple[tuple[str, Formula], ...] = ()
    pending_guess: GuessRequest | None = None
    decisions: tuple[Decision, ...] = ()
    rounds: Mapping[str, int] = field(default_factory=dict)
    max_loop_depth: int = DEFAULT_MAX_LOOP_DEPTH

    @property
    def done(self) -> bool:
        return not self.tasks and self.pending_guess is None

    @property
    def result(self) -> Formula:
        if not self.done:
            raise EngineError("pass not complete")
        return self.values[-1]

    @property
    def pending_vcs(self) -> tuple[VcRecord, ...]:
        return tuple(r for r in self.vcs if r.status == "pending")

    @property
    def subvalue_map(self) -> SubvalueMap:
        return SubvalueMap(self.entries, self.post)

    @property
    def cursor(self) -> str | None:
        """Id of the next subgame the pass will process."""
        if self.pending_guess is not None:
            return self.pending_guess.subgame
        for t in reversed(self.tasks):
            if isinstance(t, _Visit):
                sid = _visible_id(self.lg, t.path)
                if sid is not None:
                    return sid
            elif isinstance(t, _CloseLoop):
                return self.lg.id_at(t.path)
        return None

    def player_at(self, path: Path) -> Player:
        sid = self.lg.id_at(path)
        if sid is None:
            raise EngineError(f"no label at {path}")
        return self.players[sid]


def _visible_id(lg: LabeledGame, path: Path) -> str | None:
    g = node_at(lg.game, path)
    while isinstance(g, Dual):
        path = path + (0,)
        g = g.game
    return lg.id_at(path)


def start_pass(
    lg: LabeledGame, players: PlayerMap, post: Formula, max_loop_depth: int = DEFAULT_MAX_LOOP_DEPTH
) -> PassState:
    if players.root != "diamond":
        raise UnsupportedConstruct("box-rooted problems are not supported; the objective must be a diamond")
    end = SubvalueEntry(END_ID, post, "symbolic")
    return PassState(lg, players, post, (_Visit((), post),), entries=(end,), max_loop_depth=max_loop_depth)


StepResult = Union[PassState, GuessRequest, CloseLoopRequest]


def step_symbolic(state: PassState) -> StepResult:
    """Process one task. Returns the new state, or a request when a guess or loop close is due."""
    if state.pending_guess is not None:
        return state.pending_guess
    if state.pending_vcs:
        raise EngineError("check pending VCs before stepping")
    if not state.tasks:
        raise EngineError("pass already complete")
    task = state.tasks[-1]
    tasks = state.tasks[:-1]
    values = state.values
    if isinstance(task, _CloseLoop):
        return CloseLoopRequest(_label(state, task.path))
    if isinstance(task, _Finish):
        return _record(replace(state, tasks=tasks), task.path, values[-1], push=False)
    if isinstance(task, _Combine):
        left, right = values[-1], values[-2]
        values = values[:-2]
        player = state.player_at(task.path)
        combined = simplify(Or(left, right) if player == "angel" else And(left, right))
        return _record(replace(state, tasks=tasks, values=values), task.path, combined)
    post = task.post
    if post is None:
        post, values = values[-1], values[:-1]
    path = task.path
    g = node_at(state.lg.game, path)
    st = replace(state, tasks=tasks, values=values)
    match g:
        case Dual():
            return replace(st, tasks=tasks + (_Visit(path + (0,), post),))
        case Seq():
            return replace(st, tasks=tasks + (_Finish(path), _Visit(path + (0,), None), _Visit(path + (1,), post)))
        case Choice():
            return replace(st, tasks=tasks + (_Combine(path), _Visit(path + (0,), post), _Visit(path + (1,), post)))
        case Assign(v, e):
            return _record(st, path, simplify(substitute(post, v, e)))
        case Test(q):
            f = And(q, post) if st.player_at(path) == "angel" else Imply(q, post)
            return _record(st, path, simplify(f))
        case Loop() | Ode() | AssignAny():
            kind: GuessKind = "loop" if isinstance(g, Loop) else "ode" if isinstance(g, Ode) else "assign_any"
            sid = _label(st, path)
            player = st.player_at(path)
            if kind == "loop" and player == "angel":
                raise UnsupportedConstruct(f"subgame_{sid}: Angel-controlled loops are not supported")
            req = GuessRequest(sid, kind, player, g, path, post, st.loop_stack, state.rounds.get(sid, 0) + 1)
            return replace(st, pending_guess=req)
    raise EngineError(f"unexpected node {g!r}")


def _label(state: PassState, path: Path) -> str:
    sid = state.lg.id_at(path)
    if sid is None:
        raise EngineError(f"unlabeled node at {path}")
    return sid


def _record(state: PassState, path: Path, value: Formula, push: bool = True) -> PassState:
    sid = _label(state, path)
    entry = SubvalueEntry(sid, value, "symbolic")
    values = state.values + (value,) if push else state.values
    return replace(state, values=values, entries=state.entries + (entry,))


def run_to_request(state: PassState) -> tuple[PassState, GuessRequest | CloseLoopRequest | None]:
    """Run symbolic steps until a guess, a loop close or the end; returns the state and the request."""
    while True:
        if state.done:
            return state, None
        if state.pending_guess is not None:
            return state, state.pending_guess
        r = step_symbolic(state)
        if isinstance(r, CloseLoopRequest):
            return state, r
        if isinstance(r, GuessRequest):
            return state, r
        state = r


# ------------------------------------------------------------------ VCs


def constant_context(pre: Formula, bound: frozenset[str]) -> Formula:
    """Conjuncts of ``pre`` that mention no variable in ``bound``."""
    return conj(*[c for c in conjuncts(pre) if not (free_vars(c) & bound)])


def _ode_reductions(pre: Formula, ode: Ode, post: Formula, player: Player) -> list[tuple[str, Formula]]:
    if is_modal(post):
        return []
    if player == "angel":
        return [("zero-duration", Imply(pre, conj(*_nontriv(ode.domain), post)))]
    out: list[tuple[str, Formula]] = []
    still = conj(*[Cmp("=", t, Const(0)) for _, t in ode.eqs])
    out.append(("equilibrium", Imply(pre, And(still, Imply(ode.domain, post)))))
    gamma = constant_context(pre, frozenset(ode.variables))
    out.append(("weakening", Imply(conj(*_nontriv(gamma), *_nontriv(ode.domain)), post)))
    try:
        deriv = simplify(formula_derivative(post, OdeSystem.from_ode(ode)))
    except (DerivativeError, NonPolynomialError):
        return out
    out.append(("invariant", And(Imply(pre, post), Imply(conj(*_nontriv(gamma), *_nontriv(ode.domain)), deriv))))
    return out


def _nontriv(f: Formula) -> list[Formula]:
    return [] if f == TRUE else [f]


def vc_for_guess(
    entry: SubvalueEntry,
    successor_post: Formula,
    player: Player,
    node: Game,
    body_value: Formula | None = None,
) -> list[VC]:
    """VCs that justify a guessed subvalue at a loop, ODE or nondeterministic assignment."""
    if entry.provenance == "symbolic":
        raise EngineError("VCs are only emitted for guessed entries")
    pre = entry.formula
    sid = entry.subgame
    match node:
        case Ode():
            modal: Formula = Box(node, successor_post) if player == "demon" else Diamond(node, successor_post)
            return [VC.make(Imply(pre, modal), sid, "guess-justification", _ode_reductions(pre, node, successor_post, player))]
        case AssignAny(v):
            quant = Exists(v, successor_post) if player == "angel" else Forall(v, successor_post)
            return [VC.make(Imply(pre, quant), sid, "guess-justification")]
        case Loop():
            if player == "angel":
                raise UnsupportedConstruct(f"subgame_{sid}: Angel-controlled loops are not supported")
            vcs = [VC.make(Imply(pre, successor_post), sid, "loop-exit")]
            if body_value is not None:
                vcs.append(VC.make(Imply(pre, body_value), sid, "loop-inductive"))
            return vcs
    raise UnsupportedConstruct(f"no guess VCs for {type(node).__name__}")


def attach_guess(state: PassState, sid: str, formula: Formula) -> PassState:
    req = state.pending_guess
    if req is None:
        raise EngineError("no guess is pending")
    if req.subgame != sid:
        raise EngineError(f"guess for subgame_{sid} but subgame_{req.subgame} is pending")
    if req.kind == "loop":
        return enter_loop(state, formula)
    entry = SubvalueEntry(sid, formula, "guessed", req.round, req.successor_post)
    vcs = vc_for_guess(entry, req.successor_post, req.player, req.node)
    return replace(
        state,
        pending_guess=None,
        values=state.values + (formula,),
        entries=state.entries + (entry,),
        vcs=state.vcs + tuple(VcRecord(v) for v in vcs),
        decisions=state.decisions + (Decision(sid, formula, req.round),),
        rounds={**state.rounds, sid: req.round},
    )


def enter_loop(state: PassState, invariant: Formula) -> PassState:
    req = state.pending_guess
    if req is None or req.kind != "loop":
        raise EngineError("no loop guess is pending")
    if len(state.loop_stack) >= state.max_loop_depth:
        raise EngineError(f"loop nesting deeper than {state.max_loop_depth}")
    entry = SubvalueEntry(req.subgame, invariant, "guessed", req.round, req.successor_post)
    exit_vcs = vc_for_guess(entry, req.successor_post, req.player, req.node)
    path = req.path
    return replace(
        state,
        pending_guess=None,
        tasks=state.tasks + (_CloseLoop(path, invariant), _Visit(path + (0,), invariant)),
        entries=state.entries + (entry,),
        vcs=state.vcs + tuple(VcRecord(v) for v in exit_vcs),
        loop_stack=state.loop_stack + ((req.subgame, invariant),),
        decisions=state.decisions + (Decision(req.subgame, invariant, req.round),),
        rounds={**state.rounds, req.subgame: req.round},
    )


def close_loop(state: PassState) -> tuple[PassState, list[VC]]:
    if state.pending_vcs:
        raise EngineError("check pending VCs before closing the loop")
    if not state.tasks or not isinstance(state.tasks[-1], _CloseLoop):
        raise EngineError("loop body pass incomplete")
    task = state.tasks[-1]
    sid = _label(state, task.path)
    body_value = state.values[-1]
    entry = next(e for e in state.entries if e.subgame == sid)
    node = node_at(state.lg.game, task.path)
    vcs = [v for v in vc_for_guess(entry, entry.successor_post or state.post, state.players[sid], node, body_value) if v.purpose == "loop-inductive"]
    values = state.values[:-1] + (task.invariant,)
    new = replace(
        state,
        tasks=state.tasks[:-1],
        values=values,
        vcs=state.vcs + tuple(VcRecord(v) for v in vcs),
        loop_stack=state.loop_stack[:-1],
    )
    return new, vcs


def record_checks(state: PassState, outcomes: Sequence[bool]) -> PassState:
    """Record verdicts for the pending VCs in order and update entry provenance."""
    pending = [i for i, r in enumerate(state.vcs) if r.status == "pending"]
    if len(outcomes) != len(pending):
        raise EngineError(f"expected {len(pending)} verdicts, got {len(outcomes)}")
    vcs = list(state.vcs)
    for i, ok in zip(pending, outcomes):
        vcs[i] = VcRecord(vcs[i].vc, "valid" if ok else "failed")
    return _refresh_provenance(replace(state, vcs=tuple(vcs)))


def _refresh_provenance(state: PassState) -> PassState:
    by_origin: dict[str, list[VcRecord]] = {}
    for r in state.vcs:
        by_origin.setdefault(r.vc.origin, []).append(r)
    open_loops = {sid for sid, _ in state.loop_stack}
    entries = []
    for e in state.entries:
        recs = by_origin.get(e.subgame)
        if e.provenance != "symbolic" and recs:
            if any(r.status == "failed" for r in recs):
                e = replace(e, provenance="checked-failed")
            elif all(r.status == "valid" for r in recs) and e.subgame not in open_loops:
                e = replace(e, provenance="checked-valid")
        entries.append(e)
    return replace(state, entries=tuple(entries))


def failed_vcs(state: PassState) -> tuple[VcRecord, ...]:
    return tuple(r for r in state.vcs if r.status == "failed")


def accept_failed(state: PassState) -> PassState:
    """Mark failed VCs valid after an external proof discharged them."""
    vcs = tuple(VcRecord(r.vc, "valid") if r.status == "failed" else r for r in state.vcs)
    return _refresh_provenance(replace(state, vcs=vcs))


def last_guess(state: PassState) -> Decision | None:
    return state.decisions[-1] if state.decisions else None


def backtrack_to(state: PassState, sid: str) -> PassState:
    """Discard everything produced since the last guess at ``sid`` and re-open that guess."""
    if sid not in state.lg.paths:
        raise EngineError(f"unknown subgame id {sid!r}")
    req = state.pending_guess
    if req is not None and req.subgame == sid:
        return replace(state, pending_guess=replace(req, round=req.round + 1))
    idx = max((i for i, d in enumerate(state.decisions) if d.subgame == sid), default=None)
    if idx is None:
        raise EngineError(f"subgame_{sid} has no guess to backtrack to")
    rebuilt = replay(state.lg, state.players, state.post, state.decisions[:idx], state.max_loop_depth)
    again = rebuilt.pending_guess
    if again is None or again.subgame != sid:
        raise EngineError("replay did not return to the requested guess")
    rounds = dict(state.rounds)
    return replace(rebuilt, pending_guess=replace(again, round=rounds.get(sid, 0) + 1), rounds=rounds)


def replay(
    lg: LabeledGame,
    players: PlayerMap,
    post: Formula,
    decisions: Sequence[Decision],
    max_loop_depth: int = DEFAULT_MAX_LOOP_DEPTH,
) -> PassState:
    """Deterministically rebuild a pass from earlier decisions; their VCs are taken as checked."""
    state = start_pass(lg, players, post, max_loop_depth)
    queue = list(decisions)
    while True:
        state, req = run_to_request(state)
        if isinstance(req, CloseLoopRequest):
            state, _ = close_loop(state)
            state = record_checks(state, [True] * len(state.pending_vcs))
            continue
        if req is None or not queue:
            return state
        d = queue.pop(0)
        if d.subgame != req.subgame:
            raise EngineError(f"replay expected subgame_{req.subgame}, decision is for subgame_{d.subgame}")
        state = replace(state, pending_guess=replace(req, round=d.round))
        state = attach_guess(state, d.subgame, d.formula)
        state = record_checks(state, [True] * len(state.pending_vcs))


# ------------------------------------------------------------ convenience


def symbolic_precondition(lg: LabeledGame, players: PlayerMap, post: Formula) -> Formula:
    """Precondition of a game without loops, ODEs or nondeterministic assignments."""
    state, req = run_to_request(start_pass(lg, players, post))
    if req is not None:
        sid = req.subgame
        raise UnsupportedConstruct(f"subgame_{sid} needs a guess; the symbolic pass covers only the decidable fragment")
    return state.result


def angel_choice_points(lg: LabeledGame, players: PlayerMap) -> list[str]:
    out = []
    for path, sid in lg.labels.items():
        node = node_at(lg.game, path)
        if players[sid] == "angel" and isinstance(node, (AssignAny, Choice, Ode)):
            out.append(sid)
    return out


def render_policy(smap: SubvalueMap, lg: LabeledGame, players: PlayerMap) -> str:
    """One permitted-action rule per Angel choice point."""
    rules: list[str] = []
    for path, sid in lg.labels.items():
        node = node_at(lg.game, path)
        if players[sid] != "angel" or smap.get(sid) is None:
            continue
        entry = smap.get(sid)
        assert entry is not None
        match node:
            case AssignAny(v):
                target = entry.successor_post
                if target is None:
                    continue
                rules.append(
                    f"At subgame_{sid} ({v}:=*): {v}:=e permitted iff the state updated with {v}:=e satisfies "
                    f"{print_formula(target)}"
                )
            case Choice():
                left = _entry_of(smap, lg, path + (0,))
                right = _entry_of(smap, lg, path + (1,))
                for side, f in (("left", left), ("right", right)):
                    if f is not None:
                        rules.append(f"At subgame_{sid} (choice): the {side} branch is permitted iff {print_formula(f)}")
            case Ode():
                target = entry.successor_post
                if target is None:
                    continue
                rules.append(f"At subgame_{sid} (ODE): stopping is permitted iff {print_formula(target)}")
    if not rules:
        return "No Angel choice points; the policy is empty.\n"
    head = "Control policy (for the current state):\n"
    return head + "".join(f"{i}. {r}\n" for i, r in enumerate(rules, 1))


def _entry_of(smap: SubvalueMap, lg: LabeledGame, path: Path) -> Formula | None:
    sid = _visible_id(lg, path)
    if sid is None:
        return None
    e = smap.get(sid)
    return e.formula if e is not None else None
