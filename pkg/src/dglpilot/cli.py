"""Command-line entry point.

Exit codes: 0 success, 1 unsolved or exhausted, 2 usage or input error, 3 tool or configuration error.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from collections.abc import Sequence
from datetime import datetime, timezone
from pathlib import Path

from dglpilot.atp import AtpConfig, run_verification
from dglpilot.checkers import CannedProver, Checkers, KeymaeraProver, SmtSolver, ToolUnavailable, set_process_limit
from dglpilot.config import ConfigError, RunConfig, load_config
from dglpilot.core import (
    DglSyntaxError,
    attribute_players,
    label_subgames,
    parse_formula,
    print_formula,
)
from dglpilot.core.ast import Diamond, Formula, Imply
from dglpilot.corpus import CORPUS_IDS, load_corpus
from dglpilot.engine import VC, UnsupportedConstruct, symbolic_precondition
from dglpilot.oracle import HttpBackend, Oracle, OracleError, PriceTable, RecordingBackend, ReplayBackend
from dglpilot.runs import RunRecorder
from dglpilot.synthesis import SynthConfig, run_synthesis

EXIT_OK, EXIT_UNSOLVED, EXIT_USAGE, EXIT_TOOL = 0, 1, 2, 3


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ helpers


def _problem(args: argparse.Namespace, variant: str) -> tuple[Formula, str | None]:
    if getattr(args, "model", None):
        entry = load_corpus(args.model)
        text = entry.verification_text if variant == "verification" else entry.synthesis_text
        return parse_formula(text), entry.guideline
    if getattr(args, "file", None):
        return parse_formula(Path(args.file).read_text()), None
    if getattr(args, "formula", None):
        return parse_formula(args.formula), None
    raise UsageError("give a formula, --file or --model")


def _config(args: argparse.Namespace) -> RunConfig:
    cli = {
        "solver": getattr(args, "solver", None),
        "prover_jar": getattr(args, "prover_jar", None),
        "canned_prover_dir": getattr(args, "canned_prover", None),
        "oracle": getattr(args, "oracle", None),
        "transcript": getattr(args, "transcript", None),
        "endpoint": getattr(args, "endpoint", None),
        "record": getattr(args, "record", None),
        "output_dir": getattr(args, "out", None),
        "scheduler": getattr(args, "scheduler", None),
        "recovery": getattr(args, "recovery", None),
    }
    return load_config(getattr(args, "config", None), **cli)


def _checkers(cfg: RunConfig, need_solver: bool = True) -> Checkers:
    set_process_limit(cfg.process_limit)
    smt = SmtSolver(cfg.solver, tuple(shlex.split(cfg.solver_args))) if cfg.solver else None
    prover = None
    if cfg.canned_prover_dir:
        prover = CannedProver(Path(cfg.canned_prover_dir))
    elif cfg.prover_jar:
        kp = KeymaeraProver(cfg.prover_jar, cfg.prover_runtime)
        if not kp.available():
            raise ToolUnavailable(f"prover jar not found: {cfg.prover_jar}")
        prover = kp
    if need_solver and smt is None:
        raise ToolUnavailable("no SMT solver found; set solver in the config or DGLPILOT_SOLVER")
    return Checkers(smt, prover, cfg.arith_timeout, cfg.prover_timeout)


def _oracle(cfg: RunConfig) -> Oracle:
    cfg.validate()
    if cfg.oracle == "replay":
        assert cfg.transcript is not None
        backend = ReplayBackend.from_file(cfg.transcript)
    else:
        params = {}
        if cfg.temperature is not None:
            params["temperature"] = cfg.temperature
        if cfg.reasoning_effort:
            params["reasoning_effort"] = cfg.reasoning_effort
        assert cfg.endpoint and cfg.model
        backend = HttpBackend(cfg.endpoint, cfg.model, cfg.api_key_env, params=params)
    if cfg.record:
        backend = RecordingBackend(backend, cfg.record)
    return Oracle(backend, PriceTable(cfg.price_in, cfg.price_out))


def _run_root(cfg: RunConfig, args: argparse.Namespace) -> Path:
    if getattr(args, "run_dir", None):
        root = Path(args.run_dir)
    else:
        stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
        root = Path(cfg.output_dir) / stamp
    root.mkdir(parents=True, exist_ok=True)
    return root


def _recorders(root: Path):
    cache: dict[str, RunRecorder] = {}

    def factory(stream: str) -> RunRecorder:
        if stream not in cache:
            cache[stream] = RunRecorder(root / stream.replace("/", "-"))
        return cache[stream]

    return factory


def _write_result(root: Path, data: dict) -> None:
    (root / "result.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# ------------------------------------------------------------------ commands


def cmd_parse(args: argparse.Namespace) -> int:
    f, _ = _problem(args, args.variant)
    text = print_formula(f)
    print(text)
    if args.ast:
        print(repr(f))
    ok = parse_formula(text) == f
    print(f"round-trip: {'ok' if ok else 'MISMATCH'}")
    return EXIT_OK if ok else EXIT_UNSOLVED


def _game_of(f: Formula) -> Diamond:
    if isinstance(f, Imply) and isinstance(f.right, Diamond):
        return f.right
    if isinstance(f, Diamond):
        return f
    raise UsageError("expected <game>post or assumptions -> <game>post")


def cmd_attribute(args: argparse.Namespace) -> int:
    f, _ = _problem(args, args.variant)
    d = _game_of(f)
    lg = label_subgames(d.game)
    players = attribute_players(lg, "diamond")
    print(lg.print_labeled())
    for sid, who in players.items():
        print(f"subgame_{sid}\t{who}\t{type(lg.node(sid)).__name__}")
    return EXIT_OK


def cmd_wp(args: argparse.Namespace) -> int:
    f, _ = _problem(args, args.variant)
    d = _game_of(f)
    lg = label_subgames(d.game)
    pre = symbolic_precondition(lg, attribute_players(lg, "diamond"), d.body)
    print(print_formula(pre))
    return EXIT_OK


def cmd_check_vc(args: argparse.Namespace) -> int:
    cfg = _config(args)
    f = parse_formula(args.formula)
    checkers = _checkers(cfg, need_solver=False)
    r = checkers.check_vc(VC.make(f, "cli", "guess-justification"))
    print(f"{r.status}\t{r.tool}\t{r.wall_time:.3f}s")
    if r.counterexample:
        print("counterexample: " + ", ".join(f"{k}={v}" for k, v in sorted(r.counterexample.items())))
    if r.reason:
        print(f"reason: {r.reason}")
    return EXIT_OK if r.valid else EXIT_UNSOLVED


def cmd_verify(args: argparse.Namespace) -> int:
    cfg = _config(args)
    f, _ = _problem(args, "verification")
    checkers = _checkers(cfg, need_solver=False)
    checkers.require_prover()
    oracle = _oracle(cfg)
    acfg = AtpConfig(
        parallel_runs=cfg.parallel_runs,
        per_set_budget=cfg.per_set_budget,
        sets=cfg.sets,
        prover_timeout=cfg.prover_timeout,
        full_history=args.full_history,
        max_iter=cfg.max_iter,
        output_cap=cfg.output_cap,
        call_estimate=cfg.call_estimate,
        scheduler=cfg.scheduler_mode,  # type: ignore[arg-type]
    )
    root = _run_root(cfg, args)
    res = run_verification(f, acfg, oracle, checkers, _recorders(root))
    _write_result(root, res.to_dict())
    if res.proved:
        (root / "tactic.txt").write_text(res.tactic + "\n")
    print(f"{res.status}: {res.calls} calls, ${res.dollars:.4f}, winner {res.winner or '-'}")
    print(f"run directory: {root}")
    return EXIT_OK if res.proved else EXIT_UNSOLVED


def cmd_synthesize(args: argparse.Namespace) -> int:
    cfg = _config(args)
    f, guideline = _problem(args, "synthesis")
    checkers = _checkers(cfg)
    if checkers.prover is None:
        raise ToolUnavailable("synthesis needs a prover; set prover_jar or canned_prover_dir")
    oracle = _oracle(cfg)
    scfg = SynthConfig(
        parallel_runs=cfg.synth_runs,
        total_budget=cfg.synth_budget,
        recovery_mode=cfg.recovery,  # type: ignore[arg-type]
        guideline=args.guideline if args.guideline is not None else (guideline or ""),
        call_estimate=cfg.call_estimate,
        scheduler=cfg.scheduler_mode,  # type: ignore[arg-type]
    )
    root = _run_root(cfg, args)
    out = run_synthesis(f, scfg, oracle, checkers, _recorders(root))
    _write_result(root, out.to_dict())
    if out.status == "solved" and out.smap is not None:
        (root / "policy.txt").write_text(out.policy)
        (root / "subvalues.tsv").write_text(out.smap.to_lines())
        print(out.policy, end="")
    print(f"{out.status}: {out.calls} calls, ${out.dollars:.4f}")
    print(f"run directory: {root}")
    return EXIT_OK if out.status == "solved" else EXIT_UNSOLVED


def cmd_corpus(args: argparse.Namespace) -> int:
    if args.action == "list":
        for i in CORPUS_IDS:
            print(i)
        return EXIT_OK
    if not args.id:
        raise UsageError("corpus show needs a model id")
    print(load_corpus(args.id).render(), end="")
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    args.oracle = "replay"
    args.endpoint = None
    if args.mode == "synthesize":
        return cmd_synthesize(args)
    return cmd_verify(args)


# ------------------------------------------------------------------ parser


def _problem_args(p: argparse.ArgumentParser, variant: bool = True) -> None:
    p.add_argument("formula", nargs="?", help="formula text")
    p.add_argument("--file", help="read the formula from a file")
    p.add_argument("--model", choices=CORPUS_IDS, help="use a corpus model")
    if variant:
        p.add_argument("--variant", choices=("verification", "synthesis"), default="verification")


def _run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value configuration file")
    p.add_argument("--oracle", choices=("http", "replay"))
    p.add_argument("--transcript", help="JSON-lines transcript for replay")
    p.add_argument("--endpoint", help="chat-completion base URL")
    p.add_argument("--record", help="append every exchange to this transcript")
    p.add_argument("--solver", help="SMT solver binary")
    p.add_argument("--prover-jar", help="prover jar")
    p.add_argument("--canned-prover", help="directory of canned prover transcripts")
    p.add_argument("--out", help="root of the runs tree")
    p.add_argument("--run-dir", help="exact output directory for this invocation")
    p.add_argument("--scheduler", choices=("lockstep", "threads"))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dglpilot", description="Differential game logic verification and synthesis")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse and pretty-print a formula")
    _problem_args(p)
    p.add_argument("--ast", action="store_true", help="also print the syntax tree")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("attribute", help="label subgames and report who controls each")
    _problem_args(p)
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("wp", help="symbolic precondition of a loop-, ODE- and x:=*-free game")
    _problem_args(p)
    p.set_defaults(func=cmd_wp)

    p = sub.add_parser("check-vc", help="decide one formula with the configured checkers")
    p.add_argument("formula")
    _run_args(p)
    p.set_defaults(func=cmd_check_vc)

    p = sub.add_parser("verify", help="run the tactic-proposal loop")
    _problem_args(p, variant=False)
    _run_args(p)
    p.add_argument("--full-history", action="store_true", help="ablation: no summaries, full attempt history")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("synthesize", help="compute a checked subvalue map and policy")
    _problem_args(p, variant=False)
    _run_args(p)
    p.add_argument("--guideline", help="informal guideline (defaults to the corpus guideline)")
    p.add_argument("--recovery", choices=("llm_guided", "dfs_fallback"))
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("corpus", help="list or show corpus models")
    p.add_argument("action", choices=("list", "show"))
    p.add_argument("id", nargs="?", choices=CORPUS_IDS)
    p.set_defaults(func=cmd_corpus)

    p = sub.add_parser("replay", help="re-run verify or synthesize from a transcript")
    p.add_argument("transcript")
    p.add_argument("--mode", choices=("verify", "synthesize"), default="verify")
    _problem_args(p, variant=False)
    p.add_argument("--config")
    p.add_argument("--solver")
    p.add_argument("--prover-jar")
    p.add_argument("--canned-prover")
    p.add_argument("--out")
    p.add_argument("--run-dir")
    p.add_argument("--scheduler", choices=("lockstep", "threads"))
    p.add_argument("--full-history", action="store_true")
    p.add_argument("--guideline")
    p.add_argument("--recovery", choices=("llm_guided", "dfs_fallback"))
    p.set_defaults(func=cmd_replay, record=None)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (UsageError, DglSyntaxError, UnsupportedConstruct, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ToolUnavailable, ConfigError, OracleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOOL


if __name__ == "__main__":
    sys.exit(main())
