"""Regenerate lv.jsonl and the canned prover transcripts for the Model 1 replay test.

The scripted oracle answers: an analysis, a first partial tactic (canned prover: failed),
a summary, and then the full published tactic (canned prover: proved).

    python3 tests/fixtures/make_lv_fixture.py
"""

from __future__ import annotations

import sys
from pathlib import Path

from dglpilot.atp import AtpConfig, run_verification
from dglpilot.checkers import CannedProver, Checkers
from dglpilot.core import print_formula
from dglpilot.corpus import load_corpus
from dglpilot.oracle import Completion, Oracle, PriceTable, RecordingBackend, ScriptedBackend

HERE = Path(__file__).resolve().parent
TRANSCRIPT = HERE / "lv.jsonl"
PROVER_DIR = HERE / "prover"
STAMP = "2026-01-01T00:00:00+00:00"

ANALYSIS = """1) Angel-controlled actions
- xadd := * and yadd := * each sit under two duals, so Angel picks both increments every pass.
- The tests ?xadd >= 0 and ?yadd >= 0 are Angel's obligations: only non-negative additions.

2) Demon-controlled actions
- The loop is Demon's; he picks the number of passes.
- The flow x' = a*x - b*x*y, y' = d*x*y - g*y is Demon's; he picks the duration.

3) Control modes
- Equilibrium at x = g/d, y = a/b: both derivatives vanish, populations stay put.
- Away from it the populations cycle around the equilibrium.

4) Overall control pattern
- Angel can move the state up to the equilibrium each pass and keep it there."""

PARTIAL = """unfold;
loop("x>=xmin & y>=ymin & x<=g/d & y<=a/b & g/d>=xmin & a/b>=ymin & a>0 & b>0 & d>0 & g>0", 1); <(
  auto; print("Init"),
  auto; print("Step"),
  auto; print("Post")
)"""

SUMMARY_TEMPLATE = """1. Global proof plan: induction with the invariant below, then witnesses g/d - x and a/b - y, then a cut of the equilibrium into the flow.
2. Previous Tactic:
```
{tactic}
```
3. Open subgoals: the step branch is open after auto.
4. Mistakes so far: auto alone does not close the step branch.
5. Failed directions: plain auto on the inductive step.
6. Other notes: init and post close with auto."""

FAILED_TRANSCRIPT = """unfold... unfold done (proved, 9ms)
loop... loop done (proved, 21ms)
auto... auto done (proved, 310ms)
===== Init ==== closed =====
auto... auto done (no progress, 4012ms)
===== Step ====
  -1:  x>=xmin&y>=ymin&x<=g/d&y<=a/b&g/d>=xmin&a/b>=ymin&a>0&b>0&d>0&g>0
==> 1:  <xadd:=*;>^@(...)
=====
auto... auto done (proved, 288ms)
===== Post ==== closed =====
Done problem.kyx#dglpilot/vc
(failed)
"""

PROVED_TRANSCRIPT = """unfold... unfold done (proved, 9ms)
loop... loop done (proved, 21ms)
auto... auto done (proved, 305ms)
===== Init subgoal after auto ==== closed =====
existsR... existsR done (proved, 14ms)
QE... QE done (proved, 120ms)
dRI... dRI done (proved, 160ms)
QE... QE done (proved, 98ms)
auto... auto done (proved, 277ms)
===== Post subgoal after auto ==== closed =====
Done problem.kyx#dglpilot/vc
(proved)
"""


def published_tactic() -> str:
    return (HERE / "lv_tactic.txt").read_text().rstrip("\n")


def build(transcript: Path = TRANSCRIPT, prover_dir: Path = PROVER_DIR) -> None:
    problem = load_corpus("lotka_volterra").verification
    text = print_formula(problem)
    full = published_tactic()
    answers = {
        "analyze_game": [ANALYSIS],
        "get_tactic": [
            f"Start with induction on the invariant and see which branches auto closes.\n\n```\n{PARTIAL}\n```",
            f"Expand the step branch with explicit witnesses and the equilibrium cut.\n\n```\n{full}\n```",
        ],
        "summarize": [SUMMARY_TEMPLATE.format(tactic=PARTIAL)],
    }
    tokens = {"analyze_game": (1800, 700), "get_tactic": (9000, 1500), "summarize": (8000, 900)}
    scripted = ScriptedBackend.from_queues(answers)
    base = scripted.responder

    def respond(key, prompt):
        t = base(key, prompt)
        return Completion(t, *tokens[key.template_id], latency=12.5, timestamp=STAMP)

    scripted.responder = respond
    if transcript.exists():
        transcript.unlink()
    prover = CannedProver(prover_dir)
    prover.record(text, PARTIAL, FAILED_TRANSCRIPT)
    prover.record(text, full, PROVED_TRANSCRIPT)
    oracle = Oracle(RecordingBackend(scripted, transcript, stream_as="*"), PriceTable())
    res = run_verification(problem, AtpConfig(parallel_runs=1, sets=1), oracle, Checkers(None, prover))
    if not res.proved:
        raise SystemExit(f"fixture run did not prove: {res.to_dict()}")


if __name__ == "__main__":
    build(*(Path(a) for a in sys.argv[1:3]))
    print(f"wrote {TRANSCRIPT} and {PROVER_DIR}")
