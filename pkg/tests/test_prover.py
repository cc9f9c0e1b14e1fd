from __future__ import annotations

import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dglpilot.checkers import (
    CannedProver,
    KeymaeraProver,
    ToolUnavailable,
    archive_text,
    parse_prover_output,
    problem_digest,
    truncate_output,
)
from dglpilot.checkers.prover import ProverOutcome


@pytest.fixture
def failed_text(fixtures):
    return (fixtures / "prover_transcript_failed.txt").read_text()


def test_failed_transcript(failed_text):
    out = parse_prover_output(failed_text)
    assert out.status == "failed" and not out.proved
    assert [label for label, _ in out.printed_states] == ["Init branch after auto.", "Step branch after unfolding body."]
    assert "==> 1:  Temp<=Tmax" in out.printed_states[1][1]
    assert ("auto", "proved, 16ms") in out.steps
    assert ("unfold", "no progress, 2ms") in out.steps
    assert ("loop", "added 2 goal(s), 60ms") in out.steps
    assert "FAILED" in out.failure_trace


def test_empty_output_is_error():
    assert parse_prover_output("").status == "error"
    assert parse_prover_output("   \n").status == "error"


def test_lexer_error_is_error():
    out = parse_prover_output("Lexer does not recognize input at line 2\n")
    assert out.status == "error" and "Lexer" in out.diagnostics


def test_proved_summary():
    out = parse_prover_output("auto... auto done (proved, 3ms)\nPROVED entry: tactic=user\n")
    assert out.proved and out.failure_trace == ""


def test_unrecognised_output_is_unknown():
    assert parse_prover_output("some banner\n").status == "unknown"


def test_proved_outcome_has_no_trace():
    with pytest.raises(ValueError):
        ProverOutcome("proved", failure_trace="x")


@settings(max_examples=300, deadline=None)
@given(st.text())
def test_parser_is_total(text):
    out = parse_prover_output(text)
    assert out.status in ("proved", "failed", "unknown", "error")


def test_truncation_keeps_blocks_whole(failed_text):
    big = "noise line\n" * 5000 + failed_text
    cap = len(failed_text.encode()) - 200
    cut = truncate_output(big, cap)
    assert cut.startswith("[... output truncated ...]\n")
    for label, body in parse_prover_output(cut).printed_states:
        assert (label, body) in parse_prover_output(failed_text).printed_states
    assert truncate_output(failed_text, 10**6) == failed_text


def test_archive_and_digest():
    text = archive_text("e", "x > 0")
    assert text.startswith('ArchiveEntry "e"') and "x > 0" in text
    assert problem_digest("x > 0", None) == problem_digest("x > 0", "auto")
    assert problem_digest("x > 0", "t1") != problem_digest("x > 0", "t2")


def test_canned_prover(tmp_path, failed_text):
    p = CannedProver(tmp_path)
    assert p.prove("x > 0", None).status == "error"
    p.record("x > 0", "unfold", failed_text)
    assert p.prove("x > 0", "unfold").status == "failed"
    assert len(p.calls) == 2


def fake(fixtures) -> KeymaeraProver:
    return KeymaeraProver(jar=str(fixtures / "fake_prover.py"), runtime=sys.executable, runtime_args=())


def test_command_shape():
    cmd = KeymaeraProver("kx.jar").command("p.kyx", "auto", 30)
    assert cmd == ["java", "-Xss20M", "-jar", "kx.jar", "-launch", "-prove", "p.kyx", "-tactic", "auto", "-verbose", "-timeout", "30"]


def test_fake_prover_proves(fixtures):
    assert fake(fixtures).prove("x > 0 -> x >= 0", None, 5).proved


def test_fake_prover_fails(fixtures):
    out = fake(fixtures).prove("x > 0 -> x >= 1", "unfold; auto", 5)
    assert out.status == "failed"


def test_fake_prover_lexer_error_passthrough(fixtures):
    out = fake(fixtures).prove("x > 0", "lexfail", 5)
    assert out.status == "error" and "Lexer does not recognize" in out.diagnostics


def test_missing_jar(tmp_path):
    with pytest.raises(ToolUnavailable):
        KeymaeraProver(str(tmp_path / "kx.jar")).prove("x > 0", None, 1)
