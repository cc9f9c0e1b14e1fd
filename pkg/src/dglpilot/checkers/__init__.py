"""Discharge VCs with an SMT solver (arithmetic) or a hybrid-systems prover (modal)."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field
from fractions import Fraction

from dglpilot.checkers.prover import (
    CannedProver,
    KeymaeraProver,
    Prover,
    ProverOutcome,
    archive_text,
    parse_prover_output,
    problem_digest,
    truncate_output,
)
from dglpilot.checkers.smt import (
    CheckResult,
    SmtEncodingError,
    SmtSolver,
    ToolUnavailable,
    check_arith,
    formula_to_smt,
    parse_model,
    set_process_limit,
)
from dglpilot.core.printer import print_formula
from dglpilot.engine import VC

__all__ = [
    "CannedProver",
    "CheckResult",
    "Checkers",
    "KeymaeraProver",
    "Prover",
    "ProverOutcome",
    "SmtEncodingError",
    "SmtSolver",
    "ToolUnavailable",
    "VcAudit",
    "archive_text",
    "check_arith",
    "check_modal",
    "formula_to_smt",
    "parse_model",
    "parse_prover_output",
    "problem_digest",
    "set_process_limit",
    "truncate_output",
]

Mode = str  # "auto" or the tactic text


@dataclass(frozen=True)
class VcAudit:
    """How one VC was decided."""

    vc: VC
    result: CheckResult
    via: str


@dataclass
class Checkers:
    """Configured tools; either may be missing."""

    smt: SmtSolver | None = None
    prover: Prover | None = None
    arith_timeout: float = 30.0
    prover_timeout: float = 300.0
    on_transcript: Callable[[str, str], None] | None = None
    audit: list[VcAudit] = field(default_factory=list)

    def require_smt(self) -> SmtSolver:
        if self.smt is None:
            raise ToolUnavailable("no SMT solver configured")
        return self.smt

    def require_prover(self) -> Prover:
        if self.prover is None:
            raise ToolUnavailable("no prover configured")
        return self.prover

    def _log(self, kind: str, text: str) -> None:
        if self.on_transcript is not None and text:
            self.on_transcript(kind, text)

    def arith(self, f, timeout: float | None = None) -> CheckResult:
        r = check_arith(f, self.require_smt(), self.arith_timeout if timeout is None else timeout)
        self._log("smt", r.transcript)
        return r

    def check_vc(self, vc: VC) -> CheckResult:
        """Arithmetic VCs go to the solver; modal ones try sound reductions, then the prover."""
        if vc.kind == "arithmetic":
            r = self.arith(vc.formula)
            self.audit.append(VcAudit(vc, r, "smt"))
            return r
        last: CheckResult | None = None
        for name, reduced in vc.reductions:
            if self.smt is None:
                break
            r = self.arith(reduced)
            last = r
            if r.valid:
                r = CheckResult("valid", "smt", r.wall_time, reason=f"reduction:{name}", transcript=r.transcript)
                self.audit.append(VcAudit(vc, r, f"reduction:{name}"))
                return r
        if self.prover is None:
            r = CheckResult("unknown", "prover", reason="no prover configured for a modal VC")
            if last is not None:
                r = CheckResult("unknown", "smt", last.wall_time, reason="reductions inconclusive; no prover configured")
            self.audit.append(VcAudit(vc, r, "none"))
            return r
        out = check_modal(vc, self, "auto")
        status = "valid" if out.proved else ("error" if out.status == "error" else "unknown")
        r = CheckResult(status, "prover", out.duration, reason=out.diagnostics or out.status, transcript=out.raw)
        self.audit.append(VcAudit(vc, r, "prover:auto"))
        return r


def check_modal(vc: VC, checkers: Checkers, mode: Mode = "auto", timeout: float | None = None) -> ProverOutcome:
    """Run the prover on a VC with its default automation or with a supplied tactic."""
    prover = checkers.require_prover()
    tactic = None if mode == "auto" else mode
    out = prover.prove(print_formula(vc.formula), tactic, checkers.prover_timeout if timeout is None else timeout)
    checkers._log("prover", out.raw)
    return out


def counterexample_text(cex: dict[str, Fraction] | None) -> str:
    if not cex:
        return ""
    return ", ".join(f"{k}={v}" for k, v in sorted(cex.items()))
