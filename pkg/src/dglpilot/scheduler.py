"""Drive run generators either in deterministic lockstep or on threads."""

from __future__ import annotations

from collections.abc import Generator, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import Literal, TypeVar

T = TypeVar("T")

RunGen = Generator[None, None, T]
Mode = Literal["lockstep", "threads"]


def run_lockstep(runs: Sequence[RunGen[T]]) -> list[T]:
    """Round-robin, one step per run per turn; the interleaving depends only on the runs."""
    results: dict[int, T] = {}
    active = list(range(len(runs)))
    while active:
        still = []
        for i in active:
            try:
                next(runs[i])
                still.append(i)
            except StopIteration as stop:
                results[i] = stop.value
        active = still
    return [results[i] for i in range(len(runs))]


def _drain(gen: RunGen[T]) -> T:
    while True:
        try:
            next(gen)
        except StopIteration as stop:
            return stop.value


def run_threaded(runs: Sequence[RunGen[T]], max_workers: int | None = None) -> list[T]:
    if not runs:
        return []
    with ThreadPoolExecutor(max_workers=max_workers or len(runs), thread_name_prefix="run") as pool:
        futures = [pool.submit(_drain, g) for g in runs]
        return [f.result() for f in futures]


def drive(runs: Sequence[RunGen[T]], mode: Mode = "lockstep", max_workers: int | None = None) -> list[T]:
    if mode == "lockstep":
        return run_lockstep(runs)
    if mode == "threads":
        return run_threaded(runs, max_workers)
    raise ValueError(f"unknown scheduler mode {mode!r}")
