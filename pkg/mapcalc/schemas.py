from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

SCHEMA_VERSION = "1.2"


class CheckResult(BaseModel):
    """One pass/fail judgement together with the inputs that produced it."""

    name: str
    value: Optional[float] = None
    tolerance: Optional[float] = None
    passed: bool
    h: Optional[float] = None
    seed: Optional[int] = None
    detail: Optional[str] = None

    @classmethod
    def at_most(
        cls,
        name: str,
        value: float,
        tolerance: float,
        h: Optional[float] = None,
        seed: Optional[int] = None,
        detail: Optional[str] = None,
    ) -> "CheckResult":
        return cls(
            name=name, value=float(value), tolerance=float(tolerance),
            passed=bool(value <= tolerance), h=h, seed=seed, detail=detail,
        )

    @classmethod
    def at_least(
        cls,
        name: str,
        value: float,
        tolerance: float,
        h: Optional[float] = None,
        seed: Optional[int] = None,
        detail: Optional[str] = None,
    ) -> "CheckResult":
        return cls(
            name=name, value=float(value), tolerance=float(tolerance),
            passed=bool(value >= tolerance), h=h, seed=seed, detail=detail,
        )


class OracleRecord(BaseModel):
    functional: str
    params: Dict[str, Any] = {}
    oracle_value: float
    formula_value: float
    error_bar: float = 0.0
    abs_err: float
    rel_err: float
    h: float
    seed: Optional[int] = None

    @classmethod
    def compare(
        cls,
        functional: str,
        oracle_value: float,
        formula_value: float,
        h: float,
        seed: Optional[int] = None,
        params: Optional[Dict[str, Any]] = None,
        error_bar: float = 0.0,
    ) -> "OracleRecord":
        abs_err = abs(oracle_value - formula_value)
        scale = max(abs(oracle_value), abs(formula_value))
        rel_err = abs_err / scale if scale > 0 else 0.0
        return cls(
            functional=functional, params=params or {}, oracle_value=oracle_value,
            formula_value=formula_value, error_bar=error_bar, abs_err=abs_err,
            rel_err=rel_err, h=h, seed=seed,
        )


class LedgerEntry(BaseModel):
    term_id: str
    label: str
    value: float
    bound: Optional[float] = None
    R: Optional[float] = None
    h: float


class FlowRecord(BaseModel):
    iter: int
    energy: float
    tau_inf: float
    bitension_inf: float
    step: float


class Report(BaseModel):
    """Versioned JSON report written by every command."""

    schema_version: str = SCHEMA_VERSION
    command: str
    created_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    config: Dict[str, Any] = {}
    tolerances: Dict[str, float] = {}
    checks: List[CheckResult] = []
    data: Dict[str, Any] = {}

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "schema_version": SCHEMA_VERSION,
                "command": "verify-soliton",
                "created_at": "2026-01-01T00:00:00+00:00",
                "config": {"manifold": {"preset": "cigar"}},
                "tolerances": {"soliton_residual": 1e-8},
                "checks": [
                    {"name": "soliton_residual", "value": 3.1e-16, "tolerance": 1e-8,
                     "passed": True, "h": 0.0625, "seed": None}
                ],
                "data": {},
            }
        }
    )

    @field_validator("command")
    @classmethod
    def validate_command(cls, v: str) -> str:
        if not v or not v.strip():
            raise ValueError("command is required")
        return v.strip()

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failed_checks(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]
