from __future__ import annotations

import os
import sys
from pathlib import Path

import pytest

HERE = Path(__file__).resolve().parent
FIXTURES = HERE / "fixtures"
if str(HERE) not in sys.path:
    sys.path.insert(0, str(HERE))

# explicit path, no PATH lookup; override with DGLPILOT_SOLVER
Z3 = os.environ.get("DGLPILOT_SOLVER", "/usr/local/bin/z3")


def z3_available() -> bool:
    return Path(Z3).is_file()


@pytest.fixture(scope="session")
def smt():
    from dglpilot.checkers import SmtSolver

    if not z3_available():
        pytest.skip(f"no SMT solver at {Z3}")
    return SmtSolver(Z3)


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


# acceptance criteria report: (status, name, seconds, note)
ACCEPTANCE: list[tuple[str, str, float, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, seconds, note in ACCEPTANCE:
        tail = f" ({note})" if note else ""
        terminalreporter.write_line(f"{status:4} {name} [{seconds:.2f}s]{tail}")
