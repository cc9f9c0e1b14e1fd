from __future__ import annotations

import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dglpilot.budget import BudgetExhausted, BudgetLedger, RunCancelled


def test_reserve_commit():
    b = BudgetLedger(1.0, estimate=0.25)
    r = b.reserve()
    assert b.outstanding == 0.25
    b.commit(r, 0.1)
    assert b.committed == pytest.approx(0.1) and b.calls == 1 and b.outstanding == 0


def test_outstanding_reservations_count_against_limit():
    b = BudgetLedger(1.0, estimate=0.5)
    b.reserve()
    b.reserve()
    with pytest.raises(BudgetExhausted):
        b.reserve()


def test_single_call_may_exceed_estimate_only_when_alone():
    b = BudgetLedger(1.0, estimate=2.0)
    r = b.reserve()  # nothing outstanding and limit not reached
    with pytest.raises(BudgetExhausted):
        b.reserve()
    b.commit(r, 0.4)
    b.reserve()


def test_zero_limit():
    with pytest.raises(BudgetExhausted):
        BudgetLedger(0).reserve()


def test_release_returns_reservation():
    b = BudgetLedger(0.5, estimate=0.5)
    r = b.reserve()
    b.release(r)
    b.reserve()


def test_commit_twice_rejected():
    b = BudgetLedger(1)
    r = b.reserve()
    b.commit(r, 0.01)
    with pytest.raises(ValueError):
        b.commit(r, 0.01)


def test_call_limit():
    b = BudgetLedger(100, max_calls=2)
    for _ in range(2):
        b.commit(b.reserve(), 0.0)
    with pytest.raises(BudgetExhausted, match="call limit"):
        b.reserve()


def test_children_charge_parent():
    parent = BudgetLedger(1.0, estimate=0.1)
    a, c = parent.child(0.6), parent.child(0.6)
    a.commit(a.reserve(), 0.5)
    c.commit(c.reserve(), 0.3)
    assert parent.committed == pytest.approx(0.8) and parent.calls == 2
    c.commit(c.reserve(), 0.2)
    # the parent has reached its limit while the child still has room
    with pytest.raises(BudgetExhausted):
        c.reserve()
    assert c.outstanding == 0


def test_cancellation_latch_reaches_children():
    parent = BudgetLedger(10)
    kid = parent.child(5)
    parent.cancel.set()
    with pytest.raises(RunCancelled):
        kid.reserve()


def test_sibling_cancel_event():
    ev = threading.Event()
    parent = BudgetLedger(10)
    a, b = parent.child(5, cancel=ev), parent.child(5, cancel=ev)
    ev.set()
    assert a.cancelled() and b.cancelled() and not parent.cancelled()


def test_negative_limits_rejected():
    with pytest.raises(ValueError):
        BudgetLedger(-1)


def test_concurrent_reservations_respect_limit():
    b = BudgetLedger(1.0, estimate=0.01)
    done = []

    def worker():
        while True:
            try:
                r = b.reserve()
            except BudgetExhausted:
                return
            b.commit(r, 0.01)
            done.append(1)

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert b.committed <= 1.0 + 1e-9 and len(done) == b.calls == 100


@settings(max_examples=300, deadline=None)
@given(
    st.floats(min_value=0, max_value=5),
    st.floats(min_value=0.01, max_value=1),
    st.lists(st.floats(min_value=0, max_value=1), max_size=40),
)
def test_overrun_is_bounded_by_one_call(limit, estimate, costs):
    """With costs bounded by the estimate, the overrun is at most one call."""
    b = BudgetLedger(limit, estimate=estimate)
    for c in costs:
        try:
            r = b.reserve()
        except BudgetExhausted:
            break
        b.commit(r, min(c, estimate))
    assert b.committed <= limit + estimate + 1e-9
