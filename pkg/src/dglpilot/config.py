"""Run configuration: a flat key=value file, overridden by DGLPILOT_<KEY> environment variables."""

from __future__ import annotations

import configparser
import os
import shutil
import sysconfig
from collections.abc import Mapping
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """Invalid or contradictory configuration."""


@dataclass(frozen=True)
class RunConfig:
    solver: str | None = None
    solver_args: str = "-in -smt2"
    prover_jar: str | None = None
    prover_runtime: str = "java"
    canned_prover_dir: str | None = None
    oracle: str = "http"
    endpoint: str | None = None
    model: str | None = None
    api_key_env: str = "ORACLE_API_KEY"
    transcript: str | None = None
    record: str | None = None
    price_in: float = 1.25
    price_out: float = 10.0
    call_estimate: float = 0.05
    temperature: float | None = None
    reasoning_effort: str | None = None
    per_set_budget: float = 12.0
    sets: int = 2
    parallel_runs: int = 4
    max_iter: int = 20
    synth_budget: float = 10.0
    synth_runs: int = 4
    recovery: str = "llm_guided"
    arith_timeout: float = 30.0
    prover_timeout: float = 300.0
    process_limit: int = 4
    output_cap: int = 32 * 1024
    scheduler: str = ""
    output_dir: str = "runs"

    def validate(self) -> RunConfig:
        if self.oracle not in ("http", "replay"):
            raise ConfigError(f"oracle must be 'http' or 'replay', not {self.oracle!r}")
        if self.oracle == "replay":
            if not self.transcript:
                raise ConfigError("replay mode needs a transcript path")
            if self.endpoint:
                raise ConfigError("replay mode forbids a live endpoint")
        if self.oracle == "http" and not (self.endpoint and self.model):
            raise ConfigError("http oracle needs an endpoint and a model id")
        if self.recovery not in ("llm_guided", "dfs_fallback"):
            raise ConfigError(f"unknown recovery mode {self.recovery!r}")
        if self.scheduler not in ("", "lockstep", "threads"):
            raise ConfigError(f"unknown scheduler {self.scheduler!r}")
        return self

    @property
    def scheduler_mode(self) -> str:
        return self.scheduler or ("lockstep" if self.oracle == "replay" else "threads")

    def with_overrides(self, **changes: Any) -> RunConfig:
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(name: str, raw: str) -> Any:
    kind = str(_FIELDS[name].type)
    if raw.strip().lower() in ("", "none") and "None" in kind:
        return None
    try:
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{name}: expected a number, got {raw!r}") from exc
    return raw.strip()


def parse_config_text(text: str) -> dict[str, Any]:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str  # keep key case
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"config file: {exc}") from exc
    out = {}
    for key, raw in cp["run"].items():
        k = key.strip().lower().replace("-", "_")
        if k not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        out[k] = _coerce(k, raw)
    return out


def env_overrides(env: Mapping[str, str]) -> dict[str, Any]:
    out = {}
    for name in _FIELDS:
        raw = env.get(f"DGLPILOT_{name.upper()}")
        if raw is not None:
            out[name] = _coerce(name, raw)
    return out


def default_solver() -> str | None:
    """A z3 binary on PATH or next to the interpreter's scripts."""
    found = shutil.which("z3")
    if found:
        return found
    candidate = Path(sysconfig.get_paths()["scripts"]) / "z3"
    return str(candidate) if candidate.exists() else None


def load_config(path: str | Path | None = None, env: Mapping[str, str] | None = None, **cli: Any) -> RunConfig:
    """File values, then environment, then explicit command-line values."""
    values: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        values.update(parse_config_text(p.read_text()))
    values.update(env_overrides(os.environ if env is None else env))
    values.update({k: v for k, v in cli.items() if v is not None})
    if values.get("solver") is None:
        values["solver"] = default_solver()
    return RunConfig(**values)
