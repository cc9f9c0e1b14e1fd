from __future__ import annotations

import random
import sys
from fractions import Fraction

import pytest

import gen
from lvdata import GUESSES
from dglpilot.checkers import (
    Checkers,
    SmtEncodingError,
    SmtSolver,
    ToolUnavailable,
    check_arith,
    counterexample_text,
    formula_to_smt,
    parse_model,
)
from dglpilot.checkers.smt import confirm_counterexample
from dglpilot.core import parse_formula
from dglpilot.core.evaluate import eval_formula
from dglpilot.engine import VC


def test_tautology_is_valid(smt):
    r = check_arith(parse_formula("x > 0 -> x >= 0"), smt)
    assert r.valid and r.tool == "smt" and r.counterexample is None


def test_invalid_with_counterexample_in_open_interval(smt):
    r = check_arith(parse_formula("x > 0 -> x >= 1"), smt)
    assert r.status == "invalid"
    assert 0 < r.counterexample["x"] < 1


def test_quantified_formula(smt):
    assert check_arith(parse_formula("\\forall x \\exists y y > x"), smt).valid
    assert check_arith(parse_formula("\\exists x \\forall y y > x"), smt).status == "invalid"


def test_division_is_guarded(smt):
    # g/d is only meaningful when d != 0; the encoder must not let d = 0 make this fail
    assert check_arith(parse_formula("d > 0 & x <= g/d -> d*x <= g"), smt).valid


def test_case_study_loop_exit_is_valid(smt):
    f = parse_formula(f"{GUESSES['c']} -> x >= xmin & y >= ymin")
    assert check_arith(f, smt).valid


def test_forced_timeout_reports_unknown(smt):
    hard = parse_formula(
        "a*x^5+b*x^4*y+c*y^3*z^2+d*z^5*w - e*w^3*x^2 + x*y*z*w*a*b = 7 & a^2+b^2+c^2+d^2+e^2<1 "
        "& x^3*y-z*w^2>3 -> x*y*z*w*a*b*c*d*e > 0"
    )
    r = check_arith(hard, smt, timeout=0.001)
    assert r.status == "unknown" and r.reason == "timeout"


def test_wall_clock_limit_on_hung_solver(tmp_path):
    script = tmp_path / "hang.py"
    script.write_text("import time\ntime.sleep(30)\n")
    solver = SmtSolver(sys.executable, args=(str(script),), timeout_flag=None, grace=0.2)
    r = check_arith(parse_formula("x > 0"), solver, timeout=0.1)
    assert r.status == "unknown" and r.reason == "timeout"


def test_malformed_output_is_error(tmp_path):
    script = tmp_path / "noise.py"
    script.write_text("print('hello')\n")
    solver = SmtSolver(sys.executable, args=(str(script),), timeout_flag=None)
    assert check_arith(parse_formula("x > 0"), solver).status == "error"


def test_missing_solver(tmp_path):
    with pytest.raises(ToolUnavailable):
        check_arith(parse_formula("x > 0"), SmtSolver(str(tmp_path / "nope")))


def test_modal_formula_is_not_encoded():
    with pytest.raises(SmtEncodingError):
        formula_to_smt(parse_formula("<x:=1;>x > 0"))


def test_script_shape():
    text = formula_to_smt(parse_formula("x >= 0.5"))
    assert "(declare-const |x| Real)" in text
    assert "(assert (not (>= |x| (/ 1.0 2.0))))" in text and "(check-sat)" in text


def test_parse_model_values():
    out = "sat\n(\n  (define-fun x () Real\n    (/ 1.0 2.0))\n  (define-fun y () Real\n    (- 3.0))\n)\n"
    assert parse_model(out) == {"x": Fraction(1, 2), "y": Fraction(-3)}


def test_counterexample_rejected_when_it_does_not_falsify():
    f = parse_formula("x > 0 -> x >= 1")
    assert confirm_counterexample(f, {"x": Fraction(2)}) is None
    assert confirm_counterexample(f, {"x": Fraction(1, 2)}) == {"x": Fraction(1, 2)}


def test_counterexample_text():
    assert counterexample_text({"y": Fraction(1), "x": Fraction(1, 2)}) == "x=1/2, y=1"
    assert counterexample_text(None) == ""


def test_checkers_route_arithmetic_and_modal(smt):
    c = Checkers(smt)
    r = c.check_vc(VC.make(parse_formula("x > 1 -> x > 0"), "a", "guess-justification"))
    assert r.valid and c.audit[-1].via == "smt"
    modal = VC.make(parse_formula("x > 0 -> [{x'=1}]x > 0"), "b", "guess-justification")
    r = c.check_vc(modal)
    assert r.status == "unknown" and c.audit[-1].via == "none"


def test_sampling_falsifier_agrees_with_solver(smt):
    """Valid verdicts survive random sampling; invalid verdicts carry an exact counterexample."""
    rng = random.Random(11)
    verdicts = {"valid": 0, "invalid": 0}
    for _ in range(60):
        f = gen.small_formula(rng, 3)
        r = check_arith(f, smt)
        assert r.status in ("valid", "invalid")
        verdicts[r.status] += 1
        if r.valid:
            for _ in range(100):
                env = {v: Fraction(rng.randint(-20, 20), rng.randint(1, 4)) for v in gen.WP_VARS}
                assert eval_formula(f, env), f
        else:
            assert r.counterexample is not None and not eval_formula(f, r.counterexample)
    assert verdicts["valid"] and verdicts["invalid"]
