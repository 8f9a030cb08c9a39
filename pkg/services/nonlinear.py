"""
Admissible perturbations, the perturbed flow x' = A(t)x + f(t,x), and the
two-sided Gronwall-type estimates on the divergence of its solutions.
"""
import logging
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from core.config import settings
from core.exceptions import IntegrationError, ValidationError
from core.response import StageReport, margin_check, stage_report
from models.growth import GrowthRate
from models.perturbation import Perturbation
from schemas.certificate import GrowthCertificate
from services import expr as expr_service
from services.linflow import DenseTrajectory, TransitionEvaluator

logger = logging.getLogger(__name__)


def build_perturbation(components: Sequence[str], n: int, delta_f: float, theta: float = 0.0) -> Perturbation:
    if len(components) != n:
        raise ValidationError(f"perturbation needs {n} components, got {len(components)}", field="perturbation.f")
    if delta_f <= 0:
        raise ValidationError("delta_f must be positive", field="perturbation.delta_f")
    if theta < 0:
        raise ValidationError("theta must be nonnegative", field="perturbation.theta")
    parsed = tuple(expr_service.bind(expr_service.parse(src), n) for src in components)
    compiled = tuple(expr_service.compile_checked(e) for e in parsed)
    label = ", ".join(expr_service.to_source(e) for e in parsed)
    return Perturbation(n=n, components=parsed, delta_f=float(delta_f), theta=float(theta), label=label, compiled=compiled)


def zero_perturbation(n: int, delta_f: float = 0.1, theta: float = 0.0) -> Perturbation:
    return build_perturbation(["0"] * n, n, delta_f, theta)


def sin_perturbation(n: int, delta_f: float, theta: float = 0.0, coupling: Optional[Sequence[int]] = None) -> Perturbation:
    """f_k = δ_f e^{−θ|t|} sin(x_j) with j = coupling[k] (default j = k); 0 disables a component."""
    coupling = list(range(1, n + 1)) if coupling is None else list(coupling)
    damp = f"exp(-{theta!r}*abs(t))*" if theta else ""
    comps = [f"{delta_f!r}*{damp}sin(x{j})" if j else "0" for j in coupling]
    return build_perturbation(comps, n, delta_f, theta)


def from_config(entry, n: int) -> Perturbation:
    if entry is None:
        return zero_perturbation(n)
    return build_perturbation(entry.f, n, entry.delta_f, entry.theta)


def phi(p: Perturbation, rate: GrowthRate, t):
    """δ_f μ(t)^{−1−sign(t)θ} μ'(t)."""
    return p.delta_f * rate.log_rate(t) * rate.nonuniform_factor(t, -p.theta)


def check_admissible(
    p: Perturbation,
    rate: GrowthRate,
    count: Optional[int] = None,
    seed: int = 0,
    radius: Optional[float] = None,
    window=None,
    lip_slack: Optional[float] = None
) -> StageReport:
    """Sampled check of f(t,0) = 0 and ‖f(t,x) − f(t,x̃)‖ ≤ φ(t)‖x − x̃‖."""
    count = settings.ADMISSIBLE_SAMPLES if count is None else count
    radius = settings.ADMISSIBLE_RADIUS if radius is None else radius
    lo, hi = window or (settings.WINDOW_MIN, settings.WINDOW_MAX)
    lip_slack = settings.LIP_SLACK if lip_slack is None else lip_slack
    rng = np.random.default_rng(seed)

    t = rng.uniform(lo, hi, count)
    x = rng.uniform(-radius, radius, (p.n, count))
    # half the pairs are close together to catch the local constant
    spread = np.where(np.arange(count) % 2 == 0, radius, 1e-3)
    y = x + rng.uniform(-1.0, 1.0, (p.n, count)) * spread

    f0 = p(t, np.zeros((p.n, count)))
    zero_margin = 1e-12 - np.linalg.norm(f0, axis=0)

    diff = np.linalg.norm(p(t, x) - p(t, y), axis=0)
    dist = np.linalg.norm(x - y, axis=0)
    budget = phi(p, rate, t) * (1.0 + lip_slack)
    with np.errstate(divide="ignore"):
        lip_margin = np.log(budget) - np.log(diff / dist)

    witnesses = [{"t": float(a)} for a in t]
    pair_witnesses = [{"t": float(a), "x": xs.tolist(), "x_tilde": ys.tolist()} for a, xs, ys in zip(t, x.T, y.T)]
    checks = [
        margin_check("f(t,0) = 0", "perturbation.zero", zero_margin, witnesses),
        margin_check("Lipschitz budget phi(t)", "perturbation.lipschitz", lip_margin, pair_witnesses),
    ]
    report = stage_report("admissibility", checks, meta={"seed": seed, "samples": count, "radius": radius})
    logger.info(f"Perturbation '{p.label}' admissibility: {report.message}")
    return report


class PerturbedFlow:
    """Direct adaptive integration of x' = A(t)x + f(t,x)."""

    def __init__(self, evaluator: TransitionEvaluator, perturbation: Perturbation,
                 rtol: Optional[float] = None, atol: Optional[float] = None):
        self.evaluator = evaluator
        self.perturbation = perturbation
        self.n = evaluator.n
        self.rtol = evaluator.rtol if rtol is None else rtol
        self.atol = evaluator.atol if atol is None else atol

    def rhs(self, t, x):
        return self.evaluator.system.matrix(t) @ x + self.perturbation(t, x)

    def flow(self, t: float, tau: float, x0) -> np.ndarray:
        x0 = np.asarray(x0, dtype=float)
        if t == tau:
            return x0.copy()
        return self.trajectory(tau, x0, [t])[0]

    def trajectory(self, tau: float, x0, ts) -> np.ndarray:
        """States at the times ts, which must be ordered away from tau; shape (len(ts), n)."""
        ts = np.asarray(ts, dtype=float)
        x0 = np.asarray(x0, dtype=float)
        out = np.empty((ts.size, self.n))
        at_tau = ts == tau
        out[at_tau] = x0
        rest = ~at_tau
        if not np.any(rest):
            return out
        sol = solve_ivp(
            self.rhs, (float(tau), float(ts[rest][-1])), x0, method=settings.INTEGRATOR_METHOD,
            t_eval=ts[rest], rtol=self.rtol, atol=self.atol
        )
        if not sol.success:
            raise IntegrationError(sol.message, (tau, float(ts[rest][-1])))
        out[rest] = sol.y.T
        return out

    def trajectory_within(self, tau: float, x0, ts, budget: int, chunk: int = 25,
                          tolerances: Optional[Sequence[Tuple[float, float]]] = None) -> np.ndarray:
        """
        States on the grid ts (ts[0] == tau) integrated chunk by chunk, stopping
        after the first chunk that needs more than budget right-hand side
        evaluations per grid interval. Returns the computed prefix, at least one chunk.

        tolerances optionally gives (rtol, atol) per chunk.
        """
        ts = np.asarray(ts, dtype=float)
        x = np.asarray(x0, dtype=float)
        states = [x]
        for index, start in enumerate(range(0, ts.size - 1, chunk)):
            part = ts[start:start + chunk + 1]
            rtol, atol = (self.rtol, self.atol) if tolerances is None else tolerances[index]
            sol = solve_ivp(
                self.rhs, (float(part[0]), float(part[-1])), x, method=settings.INTEGRATOR_METHOD,
                t_eval=part[1:], rtol=rtol, atol=atol
            )
            if not sol.success:
                raise IntegrationError(sol.message, (float(part[0]), float(part[-1])))
            states.extend(sol.y.T)
            x = sol.y[:, -1]
            if sol.nfev > budget * (part.size - 1):
                logger.debug(f"Base trajectory from tau={tau:g} stopped at t={part[-1]:g} ({sol.nfev} evaluations)")
                break
        return np.asarray(states)

    def dense(self, tau: float, x0) -> DenseTrajectory:
        return DenseTrajectory(self.rhs, tau, x0, self.rtol, self.atol)


def flow(ev: TransitionEvaluator, p: Perturbation, rate: GrowthRate, t: float, tau: float, x0) -> np.ndarray:
    return PerturbedFlow(ev, p).flow(t, tau, x0)


def check_gronwall(
    pf: PerturbedFlow,
    rate: GrowthRate,
    cert: GrowthCertificate,
    rng: np.random.Generator,
    count: int = 100,
    t_radius: float = 5.0,
    dt_max: float = 2.0,
    x_radius: float = 2.0,
    tol: Optional[float] = None
) -> StageReport:
    """Both divergence bounds with exponent λ_max + Dδ_f on random (τ, t, x0, x̃0)."""
    tol = settings.MARGIN_TOL if tol is None else tol
    p = pf.perturbation
    rate_exp = cert.lambda_max + cert.D * p.delta_f
    upper, lower, witnesses = [], [], []
    for _ in range(count):
        tau = rng.uniform(-t_radius, t_radius)
        t = tau + rng.uniform(-dt_max, dt_max)
        x0 = rng.uniform(-x_radius, x_radius, pf.n)
        y0 = rng.uniform(-x_radius, x_radius, pf.n)
        d0 = float(np.linalg.norm(x0 - y0))
        if d0 == 0.0:
            continue
        dt = float(np.linalg.norm(pf.flow(t, tau, x0) - pf.flow(t, tau, y0)))
        spread = rate_exp * abs(float(rate.log_value(t) - rate.log_value(tau)))
        nonuniform = cert.theta * abs(float(rate.log_value(tau)))
        log_ratio = np.log(dt) - np.log(d0)
        upper.append(np.log(cert.D) + spread + nonuniform - log_ratio)
        lower.append(log_ratio + np.log(cert.D) + spread + nonuniform)
        witnesses.append({"tau": float(tau), "t": float(t), "x0": x0.tolist(), "x0_tilde": y0.tolist()})
    checks = [
        margin_check("divergence upper bound", "gronwall.upper", upper, witnesses, tol=tol),
        margin_check("divergence lower bound", "gronwall.lower", lower, witnesses, tol=tol),
    ]
    report = stage_report("gronwall", checks, data={"exponent": rate_exp})
    if not report.success:
        logger.warning(f"Gronwall bounds violated: {report.message}")
    return report
