"""Prompt templates shipped as versioned Jinja2 assets, rendered from named slots."""

from __future__ import annotations

import hashlib
import json
import unicodedata
from collections.abc import Mapping
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Any

import jinja2

ASSET_VERSION = "v1"

TEMPLATE_IDS = (
    "analyze_game",
    "get_tactic",
    "summarize",
    "plan_control_strategy",
    "guess_loop_invariant",
    "guess_ode_subvalue",
    "guess_assign_subvalue",
    "next_action",
)

_GUESS_SLOTS = ("subgame", "postcondition", "game", "analysis", "strategy", "log")

SLOTS: Mapping[str, tuple[str, ...]] = {
    "analyze_game": ("formula",),
    "get_tactic": ("formula", "analysis", "summary", "history"),
    "summarize": ("formula", "analysis", "summary", "tactic", "outcome"),
    "plan_control_strategy": ("game", "postcondition", "analysis", "guideline"),
    "guess_loop_invariant": _GUESS_SLOTS,
    "guess_ode_subvalue": _GUESS_SLOTS,
    "guess_assign_subvalue": _GUESS_SLOTS,
    "next_action": ("subgame_id", "subgame", "game", "analysis", "strategy", "log", "options"),
}

Message = dict[str, str]


class PromptError(ValueError):
    """Unknown template, missing or unexpected slot, or non-ASCII output."""


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    system: jinja2.Template
    fewshot: tuple[Message, ...]
    slots: tuple[str, ...]


@dataclass(frozen=True)
class RenderedPrompt:
    template_id: str
    messages: tuple[Message, ...]
    digest: str


# characters the prover and the prompts must never contain
_ASCII_MAP = {
    "≤": "<=",
    "≥": ">=",
    "≠": "!=",
    "∧": "&",
    "∨": "|",
    "¬": "!",
    "→": "->",
    "↔": "<->",
    "∀": "\\forall ",
    "∃": "\\exists ",
    "·": "*",
    "×": "*",
    "−": "-",
    "–": "-",
    "\u2014": "-",
    "…": "...",
    "‘": "'",
    "’": "'",
    "“": '"',
    "”": '"',
    " ": " ",
}


def to_ascii(text: str) -> str:
    """Transliterate common logic symbols and punctuation; drop remaining accents."""
    out = "".join(_ASCII_MAP.get(ch, ch) for ch in text)
    if out.isascii():
        return out
    decomposed = unicodedata.normalize("NFKD", out)
    return "".join(ch for ch in decomposed if ch.isascii())


def _ascii_slot(value: Any) -> Any:
    if isinstance(value, str):
        return to_ascii(value)
    if isinstance(value, Mapping):
        return {k: _ascii_slot(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_ascii_slot(v) for v in value]
    return value


@lru_cache(maxsize=1)
def _env() -> jinja2.Environment:
    root = resources.files("dglpilot.oracle") / "assets" / ASSET_VERSION
    return jinja2.Environment(
        loader=jinja2.FileSystemLoader(str(root)),
        undefined=jinja2.StrictUndefined,
        keep_trailing_newline=False,
        autoescape=False,
    )


@lru_cache(maxsize=None)
def load_template(template_id: str) -> PromptTemplate:
    if template_id not in SLOTS:
        raise PromptError(f"unknown template {template_id!r}")
    env = _env()
    fewshot: tuple[Message, ...] = ()
    try:
        src, _, _ = env.loader.get_source(env, f"{template_id}/fewshot.json")
        fewshot = tuple({"role": m["role"], "content": m["content"]} for m in json.loads(src))
    except jinja2.TemplateNotFound:
        pass
    return PromptTemplate(template_id, env.get_template(f"{template_id}/system.j2"), fewshot, SLOTS[template_id])


def context_digest(template_id: str, context: Mapping[str, Any]) -> str:
    """Stable hash of the template id and its slot values."""
    blob = json.dumps([template_id, context], sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def render_prompt(template_id: str, context: Mapping[str, Any]) -> RenderedPrompt:
    """System guide, optional few-shot exchanges and the user question, all ASCII."""
    tpl = load_template(template_id)
    missing = [s for s in tpl.slots if s not in context]
    if missing:
        raise PromptError(f"{template_id}: missing slot(s) {', '.join(missing)}")
    extra = sorted(set(context) - set(tpl.slots))
    if extra:
        raise PromptError(f"{template_id}: unexpected slot(s) {', '.join(extra)}")
    ctx = {k: _ascii_slot(context[k]) for k in tpl.slots}
    try:
        system = tpl.system.render()
        user = _env().get_template(f"{template_id}/user.j2").render(**ctx)
    except jinja2.UndefinedError as exc:
        raise PromptError(f"{template_id}: {exc}") from exc
    messages = ({"role": "system", "content": system}, *tpl.fewshot, {"role": "user", "content": user.strip() + "\n"})
    for m in messages:
        if not m["content"].isascii():
            bad = sorted({ch for ch in m["content"] if not ch.isascii()})
            raise PromptError(f"{template_id}: non-ASCII characters in {m['role']} message: {bad!r}")
    return RenderedPrompt(template_id, messages, context_digest(template_id, ctx))
