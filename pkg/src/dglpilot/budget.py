"""Shared dollar/call budget with reserve-then-commit semantics and a cancellation latch."""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass


class BudgetExhausted(RuntimeError):
    """A reservation would exceed the dollar or call limit."""


class RunCancelled(RuntimeError):
    """A sibling run succeeded; no new external calls may start."""


@dataclass(frozen=True)
class Reservation:
    id: int
    estimate: float
    parent: Reservation | None = None


class BudgetLedger:
    """Dollar and call limits shared by concurrent runs.

    A reservation succeeds when the committed cost plus all outstanding estimates plus the new
    estimate fits the limit, or when nothing is outstanding and the limit is not yet reached.
    With estimates that bound each call's cost, the committed total never exceeds the limit by
    more than one call.
    """

    def __init__(
        self,
        limit: float,
        max_calls: int | None = None,
        estimate: float = 0.05,
        parent: BudgetLedger | None = None,
        cancel: threading.Event | None = None,
    ) -> None:
        if limit < 0 or estimate < 0:
            raise ValueError("limits and estimates are non-negative")
        self.limit = float(limit)
        self.max_calls = max_calls
        self.estimate = float(estimate)
        self.parent = parent
        self.cancel = cancel if cancel is not None else threading.Event()
        self._lock = threading.Lock()
        self._ids = itertools.count(1)
        self._open: dict[int, float] = {}
        self.committed = 0.0
        self.calls = 0

    @property
    def outstanding(self) -> float:
        return sum(self._open.values())

    @property
    def remaining(self) -> float:
        return max(0.0, self.limit - self.committed)

    def cancelled(self) -> bool:
        return self.cancel.is_set() or (self.parent is not None and self.parent.cancelled())

    def child(self, limit: float, max_calls: int | None = None, cancel: threading.Event | None = None) -> BudgetLedger:
        """A sub-budget whose spending also counts against this one."""
        return BudgetLedger(limit, max_calls, self.estimate, parent=self, cancel=cancel)

    def reserve(self, estimate: float | None = None) -> Reservation:
        est = self.estimate if estimate is None else float(estimate)
        if self.cancelled():
            raise RunCancelled("run cancelled")
        with self._lock:
            if self.max_calls is not None and self.calls + len(self._open) >= self.max_calls:
                raise BudgetExhausted(f"call limit {self.max_calls} reached")
            fits = self.committed + self.outstanding + est <= self.limit + 1e-12
            if not (fits or (not self._open and self.committed < self.limit)):
                raise BudgetExhausted(f"budget ${self.limit:.2f} exhausted (committed ${self.committed:.4f})")
            rid = next(self._ids)
            self._open[rid] = est
        parent = None
        if self.parent is not None:
            try:
                parent = self.parent.reserve(est)
            except Exception:
                with self._lock:
                    self._open.pop(rid, None)
                raise
        return Reservation(rid, est, parent)

    def commit(self, res: Reservation, cost: float) -> None:
        with self._lock:
            if self._open.pop(res.id, None) is None:
                raise ValueError(f"reservation {res.id} is not open")
            self.committed += float(cost)
            self.calls += 1
        if self.parent is not None and res.parent is not None:
            self.parent.commit(res.parent, cost)

    def release(self, res: Reservation) -> None:
        with self._lock:
            self._open.pop(res.id, None)
        if self.parent is not None and res.parent is not None:
            self.parent.release(res.parent)
