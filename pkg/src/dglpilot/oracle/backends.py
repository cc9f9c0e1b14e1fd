"""Chat-completion backends: live HTTP, scripted and transcript replay, plus a recorder."""

from __future__ import annotations

import json
import os
import threading
import time
from collections import defaultdict, deque
from collections.abc import Callable, Iterable, Mapping
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Protocol

import httpx

from dglpilot.oracle.templates import RenderedPrompt

WILDCARD = "*"


class OracleError(RuntimeError):
    """Base class for oracle failures."""


class TransportFailure(OracleError):
    """The endpoint could not be reached or kept failing after retries."""


class ReplayMiss(OracleError):
    """Replay mode found no recorded exchange for a key."""


@dataclass(frozen=True)
class ExchangeKey:
    stream: str
    template_id: str
    digest: str
    occurrence: int


@dataclass(frozen=True)
class Completion:
    text: str
    prompt_tokens: int
    completion_tokens: int
    latency: float = 0.0
    timestamp: str = ""


class Backend(Protocol):
    def complete(self, prompt: RenderedPrompt, key: ExchangeKey) -> Completion: ...


def estimate_tokens(text: str) -> int:
    return max(1, len(text) // 4)


# ------------------------------------------------------------------ live


@dataclass
class HttpBackend:
    """POST ``{base_url}/chat/completions`` with a messages array; reads ``choices`` and ``usage``."""

    base_url: str
    model: str
    api_key_env: str = "ORACLE_API_KEY"
    timeout: float = 600.0
    retries: int = 2
    backoff: float = 1.0
    params: Mapping[str, Any] | None = None
    transport: httpx.BaseTransport | None = None
    sleep: Callable[[float], None] = time.sleep

    def _client(self) -> httpx.Client:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return httpx.Client(timeout=self.timeout, headers=headers, transport=self.transport)

    def complete(self, prompt: RenderedPrompt, key: ExchangeKey) -> Completion:
        body = {"model": self.model, "messages": list(prompt.messages), **(self.params or {})}
        url = self.base_url.rstrip("/") + "/chat/completions"
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                self.sleep(self.backoff * 2 ** (attempt - 1))
            start = time.monotonic()
            try:
                with self._client() as client:
                    resp = client.post(url, json=body)
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = TransportFailure(f"HTTP {resp.status_code}")
                    continue
                resp.raise_for_status()
                data = resp.json()
                text = data["choices"][0]["message"]["content"] or ""
                usage = data.get("usage") or {}
                return Completion(
                    text,
                    int(usage.get("prompt_tokens", 0)),
                    int(usage.get("completion_tokens", 0)),
                    time.monotonic() - start,
                )
            except httpx.HTTPStatusError as exc:
                raise TransportFailure(f"HTTP {exc.response.status_code}: {exc.response.text[:200]}") from exc
            except (httpx.TransportError, ValueError, KeyError, IndexError, TypeError) as exc:
                last = exc
        raise TransportFailure(f"oracle endpoint failed after {self.retries + 1} attempts: {last}")


# ------------------------------------------------------------------ scripted

Responder = Callable[[ExchangeKey, RenderedPrompt], "str | Completion"]


class ScriptedBackend:
    """Answers from a function, or from per-template queues consumed in call order."""

    def __init__(self, responder: Responder, price_tokens: tuple[int, int] | None = None) -> None:
        self.responder = responder
        self.price_tokens = price_tokens
        self.calls: list[ExchangeKey] = []
        self._lock = threading.Lock()

    @classmethod
    def from_queues(cls, queues: Mapping[str, Iterable[str]], per_stream: bool = True) -> ScriptedBackend:
        """Each stream (or all streams together) consumes its own copy of the queues."""
        source = {t: list(v) for t, v in queues.items()}
        live: dict[tuple[str, str], deque[str]] = {}

        def respond(key: ExchangeKey, prompt: RenderedPrompt) -> str:
            k = (key.stream if per_stream else WILDCARD, key.template_id)
            if k not in live:
                live[k] = deque(source.get(key.template_id, []))
            q = live[k]
            if not q:
                raise ReplayMiss(f"script has no more answers for {key.template_id} on stream {key.stream}")
            return q.popleft()

        return cls(respond)

    def complete(self, prompt: RenderedPrompt, key: ExchangeKey) -> Completion:
        with self._lock:
            self.calls.append(key)
            r = self.responder(key, prompt)
        if isinstance(r, Completion):
            return r
        if self.price_tokens is not None:
            return Completion(r, *self.price_tokens)
        return Completion(r, sum(estimate_tokens(m["content"]) for m in prompt.messages), estimate_tokens(r))


# ------------------------------------------------------------------ transcripts


@dataclass(frozen=True)
class TranscriptRecord:
    stream: str
    template_id: str
    digest: str
    occurrence: int
    response: str
    prompt_tokens: int
    completion_tokens: int
    latency: float
    timestamp: str

    def key(self) -> ExchangeKey:
        return ExchangeKey(self.stream, self.template_id, self.digest, self.occurrence)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, ensure_ascii=True)

    @classmethod
    def from_json(cls, line: str) -> TranscriptRecord:
        d = json.loads(line)
        return cls(**{f: d[f] for f in cls.__dataclass_fields__})


def read_transcript(path: str | Path) -> list[TranscriptRecord]:
    out = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if line.strip():
            try:
                out.append(TranscriptRecord.from_json(line))
            except (KeyError, ValueError, TypeError) as exc:
                raise OracleError(f"{path}:{n}: malformed transcript line: {exc}") from exc
    return out


class ReplayBackend:
    """Exact-match lookup on (stream, template, digest, occurrence); stream ``*`` matches any stream."""

    def __init__(self, records: Iterable[TranscriptRecord]) -> None:
        self._table: dict[ExchangeKey, TranscriptRecord] = {}
        for r in records:
            if r.key() in self._table:
                raise OracleError(f"duplicate transcript key {r.key()}")
            self._table[r.key()] = r

    @classmethod
    def from_file(cls, path: str | Path) -> ReplayBackend:
        return cls(read_transcript(path))

    def complete(self, prompt: RenderedPrompt, key: ExchangeKey) -> Completion:
        r = self._table.get(key) or self._table.get(ExchangeKey(WILDCARD, key.template_id, key.digest, key.occurrence))
        if r is None:
            raise ReplayMiss(
                f"no recorded exchange for {key.template_id} digest {key.digest[:12]} "
                f"occurrence {key.occurrence} on stream {key.stream}"
            )
        return Completion(r.response, r.prompt_tokens, r.completion_tokens, r.latency, r.timestamp)


class RecordingBackend:
    """Appends every exchange of an inner backend to a JSON-lines transcript."""

    def __init__(self, inner: Backend, path: str | Path, stream_as: str | None = None) -> None:
        self.inner = inner
        self.path = Path(path)
        self.stream_as = stream_as
        self._lock = threading.Lock()

    def complete(self, prompt: RenderedPrompt, key: ExchangeKey) -> Completion:
        c = self.inner.complete(prompt, key)
        rec = TranscriptRecord(
            self.stream_as or key.stream,
            key.template_id,
            key.digest,
            key.occurrence,
            c.text,
            c.prompt_tokens,
            c.completion_tokens,
            c.latency,
            c.timestamp,
        )
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a") as fh:
                fh.write(rec.to_json() + "\n")
        return c


class OccurrenceCounter:
    """Per (stream, template, digest) call counter used in replay keys."""

    def __init__(self) -> None:
        self._n: dict[tuple[str, str, str], int] = defaultdict(int)
        self._lock = threading.Lock()

    def next(self, stream: str, template_id: str, digest: str) -> int:
        with self._lock:
            k = (stream, template_id, digest)
            i = self._n[k]
            self._n[k] = i + 1
            return i
