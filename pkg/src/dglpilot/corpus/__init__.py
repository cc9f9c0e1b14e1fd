"""The five case-study models in ASCII concrete syntax, each with a synthesis variant and guideline."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from dglpilot.core.ast import Formula
from dglpilot.core.parser import parse_formula

CORPUS_IDS = ("lotka_volterra", "coolant", "train", "vanderpol", "chemical_reaction")

# names changed from the typeset models because the prover rejects underscores
RENAMED = {"temp_diff": "tempDiff"}


@dataclass(frozen=True)
class CorpusEntry:
    id: str
    verification_text: str
    synthesis_text: str
    guideline: str

    @property
    def verification(self) -> Formula:
        return parse_formula(self.verification_text)

    @property
    def synthesis(self) -> Formula:
        return parse_formula(self.synthesis_text)

    def render(self) -> str:
        return (
            f"# {self.id}\n\n"
            f"verification:\n{self.verification_text}\n\n"
            f"synthesis:\n{self.synthesis_text}\n\n"
            f"guideline:\n{self.guideline}\n"
        )


def _read(name: str) -> str:
    return (resources.files("dglpilot.corpus") / "data" / name).read_text().strip()


@lru_cache(maxsize=None)
def load_corpus(model_id: str) -> CorpusEntry:
    if model_id not in CORPUS_IDS:
        raise KeyError(f"unknown model {model_id!r}; choose one of {', '.join(CORPUS_IDS)}")
    return CorpusEntry(
        model_id,
        _read(f"{model_id}.verification.kyx"),
        _read(f"{model_id}.synthesis.kyx"),
        _read(f"{model_id}.guideline.txt"),
    )


def all_entries() -> list[CorpusEntry]:
    return [load_corpus(i) for i in CORPUS_IDS]
