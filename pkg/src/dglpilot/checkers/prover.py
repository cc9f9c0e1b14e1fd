"""Hybrid-systems prover CLI driver, canned transcripts, and a total output parser."""

from __future__ import annotations

import hashlib
import re
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Protocol

from dglpilot.checkers.smt import ToolUnavailable, process_slot

OutcomeStatus = Literal["proved", "failed", "unknown", "error"]


@dataclass(frozen=True)
class ProverOutcome:
    status: OutcomeStatus
    printed_states: tuple[tuple[str, str], ...] = ()
    steps: tuple[tuple[str, str], ...] = ()
    failure_trace: str = ""
    duration: float = 0.0
    diagnostics: str = ""
    raw: str = ""

    def __post_init__(self) -> None:
        if self.status == "proved" and self.failure_trace:
            raise ValueError("a proved outcome carries no failure trace")

    @property
    def proved(self) -> bool:
        return self.status == "proved"


# "===== label ==== body =====", labels and bodies may wrap lines
_BLOCK_RE = re.compile(r"=====\s*(.+?)\s*====(?!=)(.*?)=====", re.DOTALL)
_STEP_RE = re.compile(r"([A-Za-z_][\w]*)\s+done\s+\(((?:[^()]|\([^()]*\))*)\)")
_SUMMARY_RE = re.compile(r"^\s*(PROVED|FAILED|UNFINISHED|CANCELLED|ERROR)\b(.*)$", re.MULTILINE)
_DONE_RE = re.compile(r"^\s*Done\b[^\n]*(?:\n\s*)?\((proved|failed|unfinished)[^)]*\)", re.MULTILINE)
_ERROR_MARKERS = ("Lexer does not recognize", "Exception in thread", "Parse error", "ParseException")


def parse_prover_output(text: str, duration: float = 0.0) -> ProverOutcome:
    """Best-effort reading of a prover transcript; never raises."""
    try:
        return _parse(text or "", duration)
    except Exception as exc:  # pragma: no cover - defensive totality
        return ProverOutcome("error", diagnostics=f"unparseable output: {exc}", raw=text or "", duration=duration)


def _parse(text: str, duration: float) -> ProverOutcome:
    if not text.strip():
        return ProverOutcome("error", diagnostics="empty prover output", raw=text, duration=duration)
    blocks = tuple((" ".join(m.group(1).split()), m.group(2).strip()) for m in _BLOCK_RE.finditer(text))
    steps = tuple((m.group(1), m.group(2).strip()) for m in _STEP_RE.finditer(text))
    status: OutcomeStatus = "unknown"
    summaries = _SUMMARY_RE.findall(text)
    if summaries:
        key = summaries[-1][0]
        status = "proved" if key == "PROVED" else "failed"
    else:
        done = _DONE_RE.findall(text)
        if done:
            status = "proved" if done[-1] == "proved" else "failed"
    diag_lines = [ln.strip() for ln in text.splitlines() if any(mk in ln for mk in _ERROR_MARKERS)]
    if diag_lines and status != "proved":
        return ProverOutcome(
            "error", blocks, steps, failure_trace=text, duration=duration, diagnostics="\n".join(diag_lines), raw=text
        )
    trace = "" if status == "proved" else _failure_trace(text)
    return ProverOutcome(status, blocks, steps, trace, duration, raw=text)


def _failure_trace(text: str) -> str:
    lines = text.splitlines()
    for i, ln in enumerate(lines):
        if ln.strip().startswith(("Done", "FAILED")):
            return "\n".join(lines[max(0, i - 40) :]).strip()
    return "\n".join(lines[-40:]).strip()


def truncate_output(text: str, cap: int = 32 * 1024) -> str:
    """Keep the last ``cap`` bytes, dropping any printed-state block the cut would split."""
    if len(text.encode()) <= cap:
        return text
    tail = text.encode()[-cap:].decode(errors="ignore")
    cut = len(text) - len(tail)
    for m in _BLOCK_RE.finditer(text):
        if m.start() < cut < m.end():
            cut = m.end()
            break
    return "[... output truncated ...]\n" + text[cut:]


def archive_text(name: str, formula_text: str) -> str:
    return f'ArchiveEntry "{name}"\n\nProblem\n  {formula_text}\nEnd.\n\nEnd.\n'


class Prover(Protocol):
    def prove(self, formula_text: str, tactic: str | None, timeout: float) -> ProverOutcome: ...


def problem_digest(formula_text: str, tactic: str | None) -> str:
    h = hashlib.sha256()
    h.update(formula_text.encode())
    h.update(b"\0")
    h.update((tactic if tactic is not None else "auto").encode())
    return h.hexdigest()


@dataclass
class KeymaeraProver:
    """Command line: ``<runtime> <runtime_args> <jar> -launch -prove F -tactic T -verbose -timeout S``."""

    jar: str
    runtime: str = "java"
    runtime_args: tuple[str, ...] = ("-Xss20M", "-jar")
    workdir: str | None = None
    entry_name: str = "dglpilot/vc"
    grace: float = 30.0

    def command(self, problem_file: str, tactic: str, timeout: float) -> list[str]:
        return [
            self.runtime,
            *self.runtime_args,
            self.jar,
            "-launch",
            "-prove",
            problem_file,
            "-tactic",
            tactic,
            "-verbose",
            "-timeout",
            str(max(1, int(timeout))),
        ]

    def available(self) -> bool:
        return Path(self.jar).is_file()

    def prove(self, formula_text: str, tactic: str | None, timeout: float = 300.0) -> ProverOutcome:
        if not self.available():
            raise ToolUnavailable(f"prover jar not found: {self.jar}")
        with tempfile.TemporaryDirectory(dir=self.workdir) as tmp:
            problem = Path(tmp) / "problem.kyx"
            problem.write_text(archive_text(self.entry_name, formula_text))
            cmd = self.command(str(problem), tactic if tactic is not None else "auto", timeout)
            start = time.monotonic()
            with process_slot():
                try:
                    proc = subprocess.run(cmd, capture_output=True, text=True, timeout=timeout + self.grace)
                    out = proc.stdout + proc.stderr
                except FileNotFoundError as exc:
                    raise ToolUnavailable(f"prover runtime not found: {self.runtime}") from exc
                except subprocess.TimeoutExpired as exc:
                    raw = exc.stdout or ""
                    raw = raw if isinstance(raw, str) else raw.decode(errors="replace")
                    return ProverOutcome(
                        "unknown", failure_trace=raw, duration=time.monotonic() - start, diagnostics="timeout", raw=raw
                    )
            return parse_prover_output(out, time.monotonic() - start)


@dataclass
class CannedProver:
    """Serves recorded transcripts stored as ``<digest>.txt`` in a directory."""

    directory: Path
    calls: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.directory = Path(self.directory)

    def path_for(self, formula_text: str, tactic: str | None) -> Path:
        return self.directory / f"{problem_digest(formula_text, tactic)}.txt"

    def record(self, formula_text: str, tactic: str | None, transcript: str) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        p = self.path_for(formula_text, tactic)
        p.write_text(transcript)
        return p

    def prove(self, formula_text: str, tactic: str | None, timeout: float = 300.0) -> ProverOutcome:
        p = self.path_for(formula_text, tactic)
        self.calls.append(p.name)
        if not p.is_file():
            return ProverOutcome("error", diagnostics=f"no canned transcript {p.name}")
        return parse_prover_output(p.read_text())
