"""
Growth rates μ: builders for exponential, polynomial, χ-derived and custom
rates, and a sampled validator.
"""
import logging
from typing import Any, Callable, Dict, Optional, Union

import numpy as np
from scipy.optimize import brentq

from core.config import settings
from core.exceptions import ConfigurationError, GrowthRateError
from core.response import CheckResult, StageReport, margin_check, stage_report
from models.expression import BinOp, Call, Expr, Lit, Neg, Pow, TimeVar
from models.growth import GrowthRate
from services import expr as expr_service

logger = logging.getLogger(__name__)

ScalarFn = Callable[[np.ndarray], np.ndarray]


def exponential() -> GrowthRate:
    """μ(t) = e^t."""
    return GrowthRate(mu=np.exp, dmu=np.exp, kind="exponential", label="exp", log_mu=lambda t: np.asarray(t, dtype=float))


def from_chi(chi: ScalarFn, dchi: ScalarFn, label: str = "chi", kind: str = "chi-derived") -> GrowthRate:
    """Extend χ: [0,∞) → [1,∞) to ℝ by μ(t) = χ(t) for t ≥ 0 and 1/χ(|t|) for t < 0."""
    chi0 = float(np.asarray(chi(np.asarray(0.0))))
    if abs(chi0 - 1.0) > 1e-12:
        raise GrowthRateError(f"chi(0) must equal 1, got {chi0!r}", field="chi")

    samples = np.linspace(0.0, settings.T_BIG, 201)
    values = np.asarray(chi(samples), dtype=float) * np.ones_like(samples)
    if np.any(np.diff(values) <= 0):
        bad = int(np.argmax(np.diff(values) <= 0))
        raise GrowthRateError(
            "chi must be strictly increasing",
            field="chi",
            details={"t": float(samples[bad])}
        )

    def mu(t):
        c = chi(np.abs(t))
        return np.where(t >= 0, c, 1.0 / c)

    def dmu(t):
        a = np.abs(t)
        c, dc = chi(a), dchi(a)
        return np.where(t >= 0, dc, dc / (c * c))

    def log_mu(t):
        return np.sign(t) * np.log(chi(np.abs(t)))

    return GrowthRate(mu=mu, dmu=dmu, kind=kind, label=label, log_mu=log_mu)


def polynomial(degree: float = 1.0) -> GrowthRate:
    """χ(t) = (1+t)^k."""
    if degree <= 0:
        raise GrowthRateError("polynomial degree must be positive", field="polynomial")
    k = float(degree)
    return from_chi(
        lambda a: np.power(1.0 + a, k),
        lambda a: k * np.power(1.0 + a, k - 1.0),
        label=f"poly{k:g}",
        kind="polynomial"
    )


def _times(a: Expr, b: Expr) -> Expr:
    if expr_service.is_zero(a) or expr_service.is_zero(b):
        return Lit(0.0)
    if a == Lit(1.0):
        return b
    if b == Lit(1.0):
        return a
    return BinOp("*", a, b)


def _plus(a: Expr, b: Expr, op: str = "+") -> Expr:
    if expr_service.is_zero(b):
        return a
    if expr_service.is_zero(a):
        return b if op == "+" else Neg(b)
    return BinOp(op, a, b)


def _outer(func: str, u: Expr) -> Expr:
    """d func(u) / du as an expression in u."""
    if func == "sin":
        return Call("cos", u)
    if func == "cos":
        return Neg(Call("sin", u))
    if func == "tan":
        return Pow(Call("cos", u), -2.0)
    if func == "exp":
        return Call("exp", u)
    if func == "log":
        return BinOp("/", Lit(1.0), u)
    if func == "sqrt":
        return BinOp("/", Lit(0.5), Call("sqrt", u))
    if func == "abs":
        return Call("sign", u)
    if func == "tanh":
        return BinOp("-", Lit(1.0), Pow(Call("tanh", u), 2.0))
    return Lit(0.0)


def _chi_derivative(e: Expr) -> Expr:
    """χ' from the parsed χ by the chain, product and quotient rules; sign counts as constant."""
    if not expr_service.depends_on_time(e):
        return Lit(0.0)
    if isinstance(e, TimeVar):
        return Lit(1.0)
    if isinstance(e, Neg):
        inner = _chi_derivative(e.operand)
        return Lit(0.0) if expr_service.is_zero(inner) else Neg(inner)
    if isinstance(e, Pow):
        if e.exponent == 0.0:
            return Lit(0.0)
        outer = Lit(e.exponent) if e.exponent == 1.0 else _times(Lit(e.exponent), Pow(e.base, e.exponent - 1.0))
        return _times(outer, _chi_derivative(e.base))
    if isinstance(e, Call):
        return _times(_outer(e.func, e.arg), _chi_derivative(e.arg))
    da, db = _chi_derivative(e.left), _chi_derivative(e.right)
    if e.op in "+-":
        return _plus(da, db, e.op)
    if e.op == "*":
        return _plus(_times(da, e.right), _times(e.left, db))
    # (a/b)' = a'/b − a b'/b²
    quotient = Lit(0.0) if expr_service.is_zero(da) else BinOp("/", da, e.right)
    correction = Lit(0.0) if expr_service.is_zero(db) else BinOp("/", _times(e.left, db), Pow(e.right, 2.0))
    return _plus(quotient, correction, "-")


def _time_function(source: Union[str, Expr]) -> ScalarFn:
    e = expr_service.bind(expr_service.parse(source), 0) if isinstance(source, str) else source
    fn = expr_service.compile_checked(e)
    empty = np.empty((0,))

    def run(t):
        t = np.asarray(t, dtype=float)
        return np.asarray(fn(t, empty), dtype=float) * np.ones_like(t)
    return run


def custom(mu: ScalarFn, dmu: ScalarFn, label: str = "custom") -> GrowthRate:
    return GrowthRate(mu=mu, dmu=dmu, kind="custom", label=label)


def from_config(entry: Union[str, Dict[str, Any]]) -> GrowthRate:
    """Build a rate from the scenario key `growth`."""
    if entry == "exp":
        return exponential()
    if isinstance(entry, dict):
        if "polynomial" in entry:
            return polynomial(float(entry["polynomial"]))
        if "chi" in entry:
            dchi = entry.get("dchi")
            if dchi is None:
                # χ' by differentiating the parsed χ
                dchi = _chi_derivative(expr_service.bind(expr_service.parse(entry["chi"]), 0))
            return from_chi(_time_function(entry["chi"]), _time_function(dchi), label=entry["chi"])
        if "custom" in entry:
            body = entry["custom"]
            if "mu" not in body or "dmu" not in body:
                raise ConfigurationError("growth.custom requires both mu and dmu", details={"growth": entry})
            return custom(_time_function(body["mu"]), _time_function(body["dmu"]), label=body["mu"])
    raise ConfigurationError(f"unknown growth entry: {entry!r}")


def validate(rate: GrowthRate, grid, t_big: Optional[float] = None) -> StageReport:
    """Sampled positivity, monotonicity, derivative consistency and endpoint proxies."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 3 or np.any(np.diff(grid) <= 0):
        raise ConfigurationError("validation grid must be sorted with at least 3 points")
    t_big = settings.T_BIG if t_big is None else t_big

    with np.errstate(all="ignore"):
        mu = np.asarray(rate.value(grid), dtype=float) * np.ones_like(grid)
        dmu = np.asarray(rate.deriv(grid), dtype=float) * np.ones_like(grid)

    checks = []
    checks.append(margin_check(
        "mu positive", "growth.positive", mu,
        [{"t": float(t)} for t in grid]
    ))
    checks.append(margin_check(
        "mu(0) = 1", "growth.unit_at_zero",
        [1e-12 - abs(float(np.asarray(rate.value(0.0))) - 1.0)]
    ))
    steps = np.diff(mu)
    checks.append(margin_check(
        "mu strictly increasing", "growth.increasing", steps,
        [{"t": float(a), "s": float(b)} for a, b in zip(grid[:-1], grid[1:])],
        tol=-np.finfo(float).tiny
    ))
    checks.append(margin_check(
        "mu' nonnegative", "growth.derivative_sign", dmu,
        [{"t": float(t)} for t in grid]
    ))

    h = 1e-7
    with np.errstate(all="ignore"):
        fd = (np.asarray(rate.value(grid + h)) - np.asarray(rate.value(grid - h))) / (2 * h)
    allowed = 1e-6 * np.abs(dmu) + 1e-9 * np.maximum(1.0, np.abs(mu))
    checks.append(margin_check(
        "mu' matches central difference", "growth.derivative_consistency",
        allowed - np.abs(fd - dmu),
        [{"t": float(t)} for t in grid]
    ))

    top, bottom = float(np.asarray(rate.value(t_big))), float(np.asarray(rate.value(-t_big)))
    checks.append(CheckResult(
        name="endpoint proxies", ref="growth.endpoints", passed=top > 1e3 and bottom < 1e-3,
        gating=False, worst_margin=min(np.log10(top) - 3, -3 - np.log10(bottom)) if top > 0 and bottom > 0 else None,
        samples=2, witness={"mu(T_big)": top, "mu(-T_big)": bottom, "T_big": t_big},
        detail="advisory proxy for the limits at infinity"
    ))
    report = stage_report("growth", checks, data={"kind": rate.kind, "label": rate.label})
    logger.info(f"Growth rate '{rate.label}' validated: {report.message}")
    return report


def horizon(rate: GrowthRate, t: float, target: float, cap: float, direction: int = 1) -> float:
    """Smallest T in [0, cap] with |log μ(t ± T) − log μ(t)| ≥ target; cap when unreachable."""
    if target <= 0:
        return 0.0
    base = float(rate.log_value(t))

    def gap(u):
        return direction * (float(rate.log_value(t + direction * u)) - base) - target

    if gap(cap) < 0:
        return cap
    return brentq(gap, 0.0, cap, xtol=1e-10)
