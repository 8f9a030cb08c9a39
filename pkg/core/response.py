"""
Standardized report models for consistent data structure
"""
import math
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, field_validator

from core.config import settings


class CheckResult(BaseModel):
    """One verified property with its worst margin"""
    name: str = Field(description="Human-readable check name")
    ref: str = Field(description="Stable identifier of the verified property")
    passed: bool = Field(description="Whether every sample satisfied the property")
    gating: bool = Field(True, description="Whether a failure fails the stage")
    worst_margin: Optional[float] = Field(None, description="Smallest margin over all samples")
    samples: int = Field(0, description="Number of samples examined")
    witness: Optional[Dict[str, Any]] = Field(None, description="Sample achieving the worst margin")
    detail: Optional[str] = Field(None, description="Additional explanation")

    @field_validator("worst_margin")
    @classmethod
    def finite_margin(cls, v):
        # JSON has no infinities; an empty sample set reports no margin
        if v is not None and not math.isfinite(v):
            return None
        return v


class StageReport(BaseModel):
    """Report wrapper written by every command"""
    schema_version: str = Field(default_factory=lambda: settings.REPORT_SCHEMA_VERSION)
    stage: str = Field(description="Command that produced the report")
    success: bool = Field(description="Whether all gating checks passed")
    message: str = Field(description="Human-readable summary")
    checks: List[CheckResult] = Field(default_factory=list)
    data: Dict[str, Any] = Field(default_factory=dict, description="Computed quantities")
    tables: Dict[str, List[Dict[str, Any]]] = Field(default_factory=dict, description="Plot-ready rows")
    meta: Dict[str, Any] = Field(default_factory=dict, description="Seeds, tolerances, scenario name")

    def failed_checks(self) -> List[CheckResult]:
        return [c for c in self.checks if c.gating and not c.passed]


class ErrorReport(BaseModel):
    """Report written when a command aborts"""
    schema_version: str = Field(default_factory=lambda: settings.REPORT_SCHEMA_VERSION)
    stage: str
    success: bool = False
    message: str = Field(description="Error message")
    error_code: Optional[str] = Field(None, description="Exception class name")
    exit_code: int = Field(description="Process exit code")
    details: Optional[Dict[str, Any]] = Field(None, description="Additional error details")


def margin_check(
    name: str,
    ref: str,
    margins,
    witnesses: Optional[List[Dict[str, Any]]] = None,
    tol: float = 0.0,
    gating: bool = True,
    detail: Optional[str] = None
) -> CheckResult:
    """Build a CheckResult from per-sample margins (positive means satisfied)"""
    margins = [float(m) for m in margins]
    if not margins:
        return CheckResult(name=name, ref=ref, passed=True, gating=gating, samples=0, detail=detail)
    worst = min(range(len(margins)), key=lambda i: margins[i])
    witness = witnesses[worst] if witnesses else None
    return CheckResult(
        name=name,
        ref=ref,
        passed=margins[worst] >= -tol,
        gating=gating,
        worst_margin=margins[worst],
        samples=len(margins),
        witness=witness,
        detail=detail
    )


def stage_report(
    stage: str,
    checks: List[CheckResult],
    data: Optional[Dict[str, Any]] = None,
    tables: Optional[Dict[str, List[Dict[str, Any]]]] = None,
    meta: Optional[Dict[str, Any]] = None
) -> StageReport:
    """Create a stage report; success means no gating check failed"""
    failed = [c for c in checks if c.gating and not c.passed]
    if failed:
        message = "; ".join(f"{stage}: {c.ref} failed" for c in failed)
    else:
        message = f"{stage}: all {len(checks)} checks passed"
    return StageReport(
        stage=stage,
        success=not failed,
        message=message,
        checks=checks,
        data=data or {},
        tables=tables or {},
        meta=meta or {}
    )


def error_report(
    stage: str,
    message: str,
    exit_code: int,
    error_code: Optional[str] = None,
    details: Optional[Dict[str, Any]] = None
) -> ErrorReport:
    """Create an error report"""
    return ErrorReport(
        stage=stage,
        message=message,
        error_code=error_code,
        exit_code=exit_code,
        details=details
    )


def merge_reports(
    stage: str,
    reports: List[StageReport],
    data: Optional[Dict[str, Any]] = None,
    meta: Optional[Dict[str, Any]] = None
) -> StageReport:
    """Combine sub-stage reports; data is keyed by sub-stage and table rows are concatenated per kind"""
    checks: List[CheckResult] = []
    tables: Dict[str, List[Dict[str, Any]]] = {}
    merged: Dict[str, Any] = {}
    for report in reports:
        checks.extend(report.checks)
        for kind, rows in report.tables.items():
            tables.setdefault(kind, []).extend(rows)
        if report.data:
            merged[report.stage] = report.data
    merged.update(data or {})
    return stage_report(stage, checks, data=merged, tables=tables, meta=meta)
