"""The guess/analysis oracle: prompt rendering, budgeted calls and response extraction."""

from __future__ import annotations

import re
import threading
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Any, Literal

from dglpilot.budget import BudgetExhausted, BudgetLedger, RunCancelled
from dglpilot.oracle.backends import (
    WILDCARD,
    Backend,
    Completion,
    ExchangeKey,
    HttpBackend,
    OccurrenceCounter,
    OracleError,
    RecordingBackend,
    ReplayBackend,
    ReplayMiss,
    ScriptedBackend,
    TranscriptRecord,
    TransportFailure,
    read_transcript,
)
from dglpilot.oracle.templates import (
    SLOTS,
    TEMPLATE_IDS,
    PromptError,
    RenderedPrompt,
    context_digest,
    render_prompt,
    to_ascii,
)

__all__ = [
    "SLOTS",
    "TEMPLATE_IDS",
    "WILDCARD",
    "Backend",
    "BudgetExhausted",
    "CodeBlock",
    "Completion",
    "ExchangeKey",
    "HttpBackend",
    "NextAction",
    "Oracle",
    "OracleError",
    "OracleExchange",
    "PriceTable",
    "PromptError",
    "ProtocolViolation",
    "RecordingBackend",
    "RenderedPrompt",
    "ReplayBackend",
    "ReplayMiss",
    "RunCancelled",
    "ScriptedBackend",
    "TranscriptRecord",
    "TransportFailure",
    "context_digest",
    "extract_code_block",
    "parse_next_action",
    "read_transcript",
    "render_prompt",
    "to_ascii",
]


class ProtocolViolation(OracleError):
    """The response does not follow the requested answer format."""


@dataclass(frozen=True)
class PriceTable:
    """Dollars per million prompt and completion tokens."""

    input_per_million: float = 1.25
    output_per_million: float = 10.0

    def cost(self, prompt_tokens: int, completion_tokens: int) -> float:
        return (prompt_tokens * self.input_per_million + completion_tokens * self.output_per_million) / 1_000_000


@dataclass(frozen=True)
class OracleExchange:
    seq: int
    stream: str
    template_id: str
    digest: str
    occurrence: int
    response: str
    prompt_tokens: int
    completion_tokens: int
    cost: float
    timestamp: str
    latency: float

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class Oracle:
    """Renders prompts, reserves budget, calls the backend and commits the cost."""

    backend: Backend
    prices: PriceTable = field(default_factory=PriceTable)
    clock: Callable[[], str] = _utc_now
    on_exchange: Callable[[OracleExchange, RenderedPrompt], None] | None = None

    def __post_init__(self) -> None:
        self._occ = OccurrenceCounter()
        self._seq = 0
        self._lock = threading.Lock()

    def prompt(self, template_id: str, **slots: Any) -> RenderedPrompt:
        return render_prompt(template_id, slots)

    def ask(self, prompt: RenderedPrompt, budget: BudgetLedger, stream: str = WILDCARD) -> OracleExchange:
        res = budget.reserve()
        occurrence = self._occ.next(stream, prompt.template_id, prompt.digest)
        key = ExchangeKey(stream, prompt.template_id, prompt.digest, occurrence)
        try:
            c = self.backend.complete(prompt, key)
        except BaseException:
            budget.release(res)
            raise
        cost = self.prices.cost(c.prompt_tokens, c.completion_tokens)
        budget.commit(res, cost)
        with self._lock:
            self._seq += 1
            seq = self._seq
        ex = OracleExchange(
            seq,
            stream,
            prompt.template_id,
            prompt.digest,
            occurrence,
            c.text,
            c.prompt_tokens,
            c.completion_tokens,
            cost,
            c.timestamp or self.clock(),
            round(c.latency, 6),
        )
        if self.on_exchange is not None:
            self.on_exchange(ex, prompt)
        return ex


# ------------------------------------------------------------------ extraction

_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)


@dataclass(frozen=True)
class CodeBlock:
    text: str
    fallback: bool = False


def extract_code_block(response: str) -> CodeBlock:
    """Content of the last fenced block, or the whole response flagged as a fallback."""
    blocks = _FENCE_RE.findall(response)
    if blocks:
        return CodeBlock(blocks[-1].strip("\n").rstrip())
    return CodeBlock(response.strip(), fallback=True)


@dataclass(frozen=True)
class NextAction:
    kind: Literal["try_proof", "backtrack_to"]
    target: str | None = None


_ACTION_RE = re.compile(r"backtrack-to:\s*(?:subgame_)?([A-Za-z0-9_]+)")


def parse_next_action(text: str, known_ids: Sequence[str]) -> NextAction:
    """Strict reading of ``try-proof`` or ``backtrack-to:<id>``."""
    word = text.strip()
    if word == "try-proof":
        return NextAction("try_proof")
    m = _ACTION_RE.fullmatch(word)
    if m is None:
        raise ProtocolViolation(f"unrecognized action {word[:80]!r}")
    sid = m.group(1)
    if sid not in known_ids:
        raise ProtocolViolation(f"unknown subgame id {sid!r} in {word!r}")
    return NextAction("backtrack_to", sid)
