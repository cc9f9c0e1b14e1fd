"""Run directories: prompts, responses, tactics, prover transcripts and an append-only ledger."""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from dglpilot.oracle import OracleExchange, RenderedPrompt

LEDGER_FIELDS = (
    "seq",
    "stream",
    "template_id",
    "digest",
    "occurrence",
    "prompt_tokens",
    "completion_tokens",
    "cost",
    "timestamp",
    "latency",
)


def ledger_line(ex: OracleExchange) -> str:
    d = ex.to_dict()
    return json.dumps({k: d[k] for k in LEDGER_FIELDS}, sort_keys=True)


class RunRecorder:
    """Single writer for one run directory; all writes go through one lock."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self._lock = threading.Lock()
        for sub in ("prompts", "responses", "tactics", "prover"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        (self.root / "ledger.jsonl").touch()

    def _write(self, rel: str, text: str) -> None:
        with self._lock:
            (self.root / rel).write_text(text)

    def exchange(self, ex: OracleExchange, prompt: RenderedPrompt) -> None:
        stem = f"{ex.seq:04d}-{ex.template_id}"
        with self._lock:
            (self.root / "prompts" / f"{stem}.json").write_text(json.dumps(list(prompt.messages), indent=1) + "\n")
            (self.root / "responses" / f"{stem}.txt").write_text(ex.response)
            with (self.root / "ledger.jsonl").open("a") as fh:
                fh.write(ledger_line(ex) + "\n")

    def tactic(self, index: int, text: str) -> None:
        self._write(f"tactics/{index:03d}.txt", text)

    def prover(self, index: int, text: str) -> None:
        self._write(f"prover/{index:03d}.txt", text)

    def result(self, data: dict[str, Any]) -> None:
        self._write("result.json", json.dumps(data, indent=2, sort_keys=True) + "\n")


class NullRecorder:
    def exchange(self, ex: OracleExchange, prompt: RenderedPrompt) -> None:
        pass

    def tactic(self, index: int, text: str) -> None:
        pass

    def prover(self, index: int, text: str) -> None:
        pass

    def result(self, data: dict[str, Any]) -> None:
        pass


@dataclass(frozen=True)
class LedgerSummary:
    calls: int
    dollars: float
    minutes: float

    def to_dict(self) -> dict[str, Any]:
        return {"calls": self.calls, "dollars": round(self.dollars, 6), "minutes": round(self.minutes, 4)}


@dataclass(frozen=True)
class RunLedger:
    entries: tuple[dict[str, Any], ...]

    def summary(self) -> LedgerSummary:
        return LedgerSummary(
            len(self.entries),
            sum(float(e["cost"]) for e in self.entries),
            sum(float(e["latency"]) for e in self.entries) / 60.0,
        )


def ledger_io(run_dir: str | Path) -> RunLedger:
    """Read every ``ledger.jsonl`` at or below ``run_dir``, ordered by sequence number."""
    root = Path(run_dir)
    entries: list[dict[str, Any]] = []
    files = [root] if root.is_file() else sorted(root.rglob("ledger.jsonl"))
    for f in files:
        for line in f.read_text().splitlines():
            if line.strip():
                entries.append(json.loads(line))
    entries.sort(key=lambda e: (e.get("seq", 0), e.get("stream", "")))
    return RunLedger(tuple(entries))
