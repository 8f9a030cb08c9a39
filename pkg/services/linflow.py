"""
Evolution operator Ψ(t,s) of x' = A(t)x, the projection family
π(t) = Ψ(t,0)π₀Ψ(0,t), and sampled certification of nonuniform
μ-dichotomy and μ-bounded growth.
"""
import logging
import threading
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm, schur, solve_sylvester

from core.config import settings
from core.exceptions import (
    CertificateError, ConfigurationError, DegenerateFitError, IntegrationError,
    NotApplicableError, ValidationError
)
from core.response import StageReport, margin_check, stage_report
from models.growth import GrowthRate
from models.linear import LinearSystem
from schemas.certificate import DichotomyCertificate, GrowthCertificate, LocalBound
from services import expr as expr_service

logger = logging.getLogger(__name__)


def spectral_norm(m: np.ndarray) -> np.ndarray:
    """Largest singular value over the last two axes."""
    m = np.asarray(m, dtype=float)
    if m.shape[-1] == 0 or m.shape[-2] == 0:
        return np.zeros(m.shape[:-2])
    return np.linalg.norm(m, ord=2, axis=(-2, -1))


def make_dichotomy_certificate(**values) -> DichotomyCertificate:
    """Build a certificate, turning schema violations into CertificateError."""
    try:
        return DichotomyCertificate(**values)
    except ValueError as e:
        raise CertificateError(f"invalid dichotomy certificate: {e}", details={"values": values}) from None


def make_growth_certificate(**values) -> GrowthCertificate:
    try:
        return GrowthCertificate(**values)
    except ValueError as e:
        raise CertificateError(f"invalid growth certificate: {e}", details={"values": values}) from None


# ---------------------------------------------------------------------------
# Systems
# ---------------------------------------------------------------------------

def spectral_projection(a: np.ndarray) -> np.ndarray:
    """Projection onto the stable spectral subspace along the unstable one."""
    a = np.asarray(a, dtype=float)
    eig = np.linalg.eigvals(a)
    if np.any(np.abs(eig.real) < 1e-12):
        raise ValidationError("matrix is not hyperbolic", field="A", details={"eigenvalues_real": eig.real.tolist()})
    t, z, k = schur(a, output="real", sort="lhp")
    n = a.shape[0]
    if k == 0:
        return np.zeros((n, n))
    if k == n:
        return np.eye(n)
    y = solve_sylvester(t[:k, :k], -t[k:, k:], t[:k, k:])
    p = np.zeros((n, n))
    p[:k, :k] = np.eye(k)
    p[:k, k:] = y
    return z @ p @ z.T


def build_system(
    n: int,
    entries: Sequence[Sequence[str]],
    pi0: Union[str, Sequence[Sequence[float]]],
    label: str = "linear"
) -> LinearSystem:
    """Build a LinearSystem from expression entries in t."""
    if not 1 <= n <= 8:
        raise ValidationError(f"dimension must be between 1 and 8, got {n}", field="linear.n")
    if len(entries) != n or any(len(row) != n for row in entries):
        raise ValidationError(f"A must be {n}x{n}", field="linear.A")

    parsed = tuple(tuple(expr_service.bind(expr_service.parse(str(src)), 0) for src in row) for row in entries)
    compiled = [[expr_service.compile_checked(e) for e in row] for row in parsed]
    empty = np.empty((0,))

    def matrix_fn(t: float) -> np.ndarray:
        return np.array([[float(c(t, empty)) for c in row] for row in compiled])

    constant = None
    if not any(expr_service.depends_on_time(e) for row in parsed for e in row):
        constant = matrix_fn(0.0)

    if isinstance(pi0, str):
        if pi0 != "spectral":
            raise ConfigurationError(f"unknown pi0 keyword '{pi0}'")
        if constant is None:
            raise ConfigurationError("pi0 = 'spectral' needs a constant matrix A")
        projection = spectral_projection(constant)
    else:
        projection = np.asarray(pi0, dtype=float)
    return from_matrices(n, matrix_fn, projection, label=label, constant=constant, entries=parsed)


def from_matrices(
    n: int,
    matrix_fn: Callable[[float], np.ndarray],
    pi0: np.ndarray,
    label: str = "linear",
    constant: Optional[np.ndarray] = None,
    entries=None
) -> LinearSystem:
    pi0 = np.asarray(pi0, dtype=float)
    if pi0.shape != (n, n):
        raise ValidationError(f"pi0 must be {n}x{n}", field="linear.pi0")
    if np.max(np.abs(pi0 @ pi0 - pi0)) > 1e-10:
        raise ValidationError("pi0 is not idempotent", field="linear.pi0")

    samples = np.linspace(settings.WINDOW_MIN, settings.WINDOW_MAX, 81)
    for t in samples if constant is None else [0.0]:
        a = constant if constant is not None else matrix_fn(float(t))
        if not np.all(np.isfinite(a)):
            raise ValidationError(f"A(t) is not finite at t={t:g}", field="linear.A")
    return LinearSystem(n=n, matrix_fn=matrix_fn, pi0=pi0, label=label, constant=constant, entries=entries)


def diag_hyperbolic() -> LinearSystem:
    return build_system(2, [["-1", "0"], ["0", "1"]], [[1.0, 0.0], [0.0, 0.0]], label="diag_hyperbolic")


def scalar_stable() -> LinearSystem:
    return build_system(1, [["-1"]], [[1.0]], label="scalar_stable")


def bv_scalar_stable() -> LinearSystem:
    """a(t) = −1 − 0.1·t·sin t; Ψ(t,s) = exp(−(t−s) + 0.1(t cos t − s cos s − sin t + sin s))."""
    return build_system(1, [["-1 - 0.1*t*sin(t)"]], [[1.0]], label="bv_scalar_stable")


PRESETS = {
    "diag_hyperbolic": diag_hyperbolic,
    "bv_scalar_stable": bv_scalar_stable,
    "scalar_stable": scalar_stable,
}


def from_config(entry) -> LinearSystem:
    if isinstance(entry, str):
        if entry not in PRESETS:
            raise ConfigurationError(f"unknown linear preset '{entry}'", details={"presets": sorted(PRESETS)})
        return PRESETS[entry]()
    return build_system(entry.n, entry.A, entry.pi0, label=entry.label or "linear")


# ---------------------------------------------------------------------------
# Evolution operator
# ---------------------------------------------------------------------------

class DenseTrajectory:
    """Solution of y' = rhs(t, y) through (tau, y0), extended on demand in both directions."""

    def __init__(self, rhs, tau: float, y0, rtol: float, atol: float, method: str = None):
        self.rhs = rhs
        self.tau = float(tau)
        self.y0 = np.array(y0, dtype=float)
        self.rtol, self.atol = rtol, atol
        self.method = method or settings.INTEGRATOR_METHOD
        self._segments = {1: [], -1: []}
        self._ends = {1: (self.tau, self.y0), -1: (self.tau, self.y0)}

    @property
    def t_lo(self) -> float:
        return self._ends[-1][0]

    @property
    def t_hi(self) -> float:
        return self._ends[1][0]

    def extend(self, t: float):
        direction = 1 if t > self.tau else -1
        start, y = self._ends[direction]
        if (t - start) * direction <= 0:
            return
        sol = solve_ivp(self.rhs, (start, t), y, method=self.method, rtol=self.rtol, atol=self.atol, dense_output=True)
        if not sol.success:
            raise IntegrationError(sol.message, (start, t))
        self._segments[direction].append((min(start, t), max(start, t), sol.sol))
        self._ends[direction] = (float(t), sol.y[:, -1].copy())

    def __call__(self, t: float) -> np.ndarray:
        t = float(t)
        if t == self.tau:
            return self.y0.copy()
        self.extend(t)
        direction = 1 if t > self.tau else -1
        for lo, hi, sol in self._segments[direction]:
            if lo <= t <= hi:
                return sol(t)
        return self._ends[direction][1].copy()


class TransitionEvaluator:
    """Ψ(t,s) by integration of the matrix ODE, with a lattice cache of Ψ(t_k,0) and Ψ(0,t_k)."""

    def __init__(
        self,
        system: LinearSystem,
        rtol: Optional[float] = None,
        atol: Optional[float] = None,
        window: Optional[Tuple[float, float]] = None,
        lattice_step: Optional[float] = None
    ):
        self.system = system
        self.n = system.n
        self.rtol = settings.INTEGRATOR_RTOL if rtol is None else rtol
        self.atol = settings.INTEGRATOR_ATOL if atol is None else atol
        self.window = window or (settings.WINDOW_MIN, settings.WINDOW_MAX)
        self.lattice_step = lattice_step or settings.LATTICE_STEP
        self._lock = threading.Lock()
        self._memo: Dict[Tuple[float, float], np.ndarray] = {}
        self._anchor: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None

    # -- right-hand sides ---------------------------------------------------
    def _forward_rhs(self, t, y):
        a = self.system.matrix(t)
        return (a @ y.reshape(self.n, -1)).ravel()

    def _adjoint_rhs(self, t, y):
        a = self.system.matrix(t)
        return -(y.reshape(-1, self.n) @ a).ravel()

    def _solve(self, rhs, s: float, ts: np.ndarray, y0: np.ndarray) -> np.ndarray:
        """States at the times ts (all on one side of s, ordered away from s)."""
        sol = solve_ivp(
            rhs, (s, float(ts[-1])), y0, method=settings.INTEGRATOR_METHOD,
            t_eval=ts, rtol=self.rtol, atol=self.atol
        )
        if not sol.success:
            raise IntegrationError(sol.message, (s, float(ts[-1])))
        return sol.y.T

    def _fan(self, rhs, s: float, ts: np.ndarray) -> np.ndarray:
        n = self.n
        out = np.empty((ts.size, n, n))
        eye = np.eye(n)
        out[ts == s] = eye
        for side in (1, -1):
            mask = (ts - s) * side > 0
            if not np.any(mask):
                continue
            idx = np.nonzero(mask)[0]
            order = idx[np.argsort(ts[idx] * side)]
            states = self._solve(rhs, s, ts[order], eye.ravel())
            out[order] = states.reshape(-1, n, n)
        return out

    # -- public API -----------------------------------------------------------
    def transition(self, t: float, s: float) -> np.ndarray:
        t, s = float(t), float(s)
        if t == s:
            return np.eye(self.n)
        if self.system.is_constant:
            return expm(self.system.constant * (t - s))
        key = (t, s)
        with self._lock:
            cached = self._memo.get(key)
        if cached is not None:
            return cached.copy()
        value = self._fan(self._forward_rhs, s, np.array([t]))[0]
        with self._lock:
            if len(self._memo) > 4096:
                self._memo.clear()
            self._memo[key] = value
        return value.copy()

    def transition_fan(self, s: float, ts) -> np.ndarray:
        """Ψ(t_i, s) for every t_i, shape (len(ts), n, n)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if self.system.is_constant:
            return expm(self.system.constant[None] * (ts - s)[:, None, None])
        return self._fan(self._forward_rhs, float(s), ts)

    def inverse_fan(self, s: float, ts) -> np.ndarray:
        """Ψ(s, t_i) for every t_i, shape (len(ts), n, n)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if self.system.is_constant:
            return expm(-self.system.constant[None] * (ts - s)[:, None, None])
        return self._fan(self._adjoint_rhs, float(s), ts)

    def _anchors(self):
        with self._lock:
            if self._anchor is None:
                lo, hi = self.window
                k_lo = int(np.floor(lo / self.lattice_step))
                k_hi = int(np.ceil(hi / self.lattice_step))
                nodes = self.lattice_step * np.arange(k_lo, k_hi + 1)
                forward = self._fan(self._forward_rhs, 0.0, nodes)
                backward = self._fan(self._adjoint_rhs, 0.0, nodes)
                self._anchor = (nodes, forward, backward)
                logger.debug(f"Anchored {nodes.size} lattice nodes for '{self.system.label}'")
            return self._anchor

    def from_anchor(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """(Ψ(t,0), Ψ(0,t)) composed from the nearest lattice node."""
        t = float(t)
        if self.system.is_constant:
            a = self.system.constant
            return expm(a * t), expm(-a * t)
        nodes, forward, backward = self._anchors()
        if not nodes[0] <= t <= nodes[-1]:
            return self.transition(t, 0.0), self.transition(0.0, t)
        k = int(np.argmin(np.abs(nodes - t)))
        if nodes[k] == t:
            return forward[k].copy(), backward[k].copy()
        return self.transition(t, nodes[k]) @ forward[k], backward[k] @ self.transition(nodes[k], t)

    def flow(self, t: float, tau: float, x0) -> np.ndarray:
        x0 = np.asarray(x0, dtype=float)
        if self.system.is_constant or t == tau:
            return self.transition(t, tau) @ x0
        return self._solve(self._forward_rhs, float(tau), np.array([float(t)]), x0)[0]

    def dense(self, tau: float, x0) -> DenseTrajectory:
        return DenseTrajectory(self._forward_rhs, tau, x0, self.rtol, self.atol)


class ProjectionFamily:
    """
    π(t) = Ψ(t,0) π₀ Ψ(0,t) and id − π(t) = Ψ(t,0)(id − π₀)Ψ(0,t).

    Both sides are composed around the anchor t = 0 and never obtained by
    subtraction: a rounding residue of the other side would be amplified by
    the transport along the flow.
    """

    def __init__(self, evaluator: TransitionEvaluator):
        self.evaluator = evaluator
        self.pi0 = evaluator.system.pi0
        self.n = evaluator.n
        self.stable_rank = evaluator.system.stable_rank
        self.unstable_rank = evaluator.system.unstable_rank
        self.anchor_projectors = {"stable": self.pi0, "unstable": np.eye(self.n) - self.pi0}
        self._trivial = self.stable_rank in (0, self.n)
        self._lock = threading.Lock()
        self._memo: Dict[float, Tuple[np.ndarray, np.ndarray]] = {}

    def _pair(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        t = float(t)
        if t == 0.0 or self._trivial:
            return self.anchor_projectors["stable"], self.anchor_projectors["unstable"]
        with self._lock:
            cached = self._memo.get(t)
        if cached is not None:
            return cached
        fwd, bwd = self.evaluator.from_anchor(t)
        value = (fwd @ self.anchor_projectors["stable"] @ bwd, fwd @ self.anchor_projectors["unstable"] @ bwd)
        with self._lock:
            if len(self._memo) > 8192:
                self._memo.clear()
            self._memo[t] = value
        return value

    def projection(self, t: float) -> np.ndarray:
        return self._pair(t)[0].copy()

    def complement(self, t: float) -> np.ndarray:
        return self._pair(t)[1].copy()

    def side(self, side: str, t: float) -> np.ndarray:
        """π(t) for "stable", id − π(t) for "unstable"."""
        return self.projection(t) if side == "stable" else self.complement(t)

    def projections(self, ts) -> np.ndarray:
        return np.stack([self.projection(t) for t in np.atleast_1d(ts)])

    def transport(self, ts, s: float, side: str = "stable") -> np.ndarray:
        """Ψ(t_i,s) restricted to one side at s, as Ψ(t_i,0) P₀ Ψ(0,s); shape (len(ts), n, n)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        _, from_s = self.evaluator.from_anchor(float(s))
        return self.evaluator.transition_fan(0.0, ts) @ (self.anchor_projectors[side] @ from_s)

    def pullback(self, t: float, ss, side: str = "stable") -> np.ndarray:
        """P(t)Ψ(t,s_i) as Ψ(t,0) P₀ Ψ(0,s_i); shape (len(ss), n, n)."""
        ss = np.atleast_1d(np.asarray(ss, dtype=float))
        to_t, _ = self.evaluator.from_anchor(float(t))
        return (to_t @ self.anchor_projectors[side]) @ self.evaluator.inverse_fan(0.0, ss)


def projection(fam: ProjectionFamily, t: float) -> np.ndarray:
    return fam.projection(t)


def transition(ev: TransitionEvaluator, t: float, s: float) -> np.ndarray:
    return ev.transition(t, s)


# ---------------------------------------------------------------------------
# Certification
# ---------------------------------------------------------------------------

def _log_norms(m: np.ndarray) -> np.ndarray:
    norms = spectral_norm(m)
    with np.errstate(divide="ignore"):
        return np.log(norms)


def _dichotomy_samples(ev, fam, rate, grid):
    """(t, s, log‖·‖) over all grid pairs, per side, with the projected operators composed around the anchor."""
    grid = np.asarray(grid, dtype=float)
    rows = {"stable": [], "unstable": []}
    to_grid = ev.transition_fan(0.0, grid)
    sides = [side for side, rank in (("stable", fam.stable_rank), ("unstable", fam.unstable_rank)) if rank]
    for s in grid:
        _, from_s = ev.from_anchor(s)
        for side in sides:
            mask = grid >= s if side == "stable" else grid <= s
            ops = to_grid[mask] @ (fam.anchor_projectors[side] @ from_s)
            rows[side].extend((t, s, v) for t, v in zip(grid[mask], _log_norms(ops)))
    return {k: np.array(v, dtype=float).reshape(-1, 3) for k, v in rows.items()}


def verify_dichotomy(
    ev: TransitionEvaluator,
    fam: ProjectionFamily,
    rate: GrowthRate,
    cert: DichotomyCertificate,
    grid,
    tol: Optional[float] = None
) -> StageReport:
    """Check both dichotomy bounds on every grid pair; margins are log(bound) − log(norm)."""
    if not isinstance(cert, DichotomyCertificate):
        cert = make_dichotomy_certificate(**dict(cert))
    if fam.unstable_rank and cert.lambda_u is None:
        raise CertificateError("certificate has no lambda_u but the unstable part is nonempty", field="lambda_u")
    tol = settings.MARGIN_TOL if tol is None else tol
    samples = _dichotomy_samples(ev, fam, rate, grid)

    checks = []
    for side, lam, extra in (("stable", cert.lambda_s, cert.nu), ("unstable", cert.lambda_u, cert.omega)):
        rows = samples[side]
        rows = rows[np.isfinite(rows[:, 2])] if rows.size else rows
        if not rows.size:
            checks.append(margin_check(f"{side} dichotomy bound", f"dichotomy.{side}_bound", []))
            continue
        t, s, log_norm = rows.T
        bound = np.log(cert.D) + lam * (rate.log_value(t) - rate.log_value(s)) + extra * np.abs(rate.log_value(s))
        checks.append(margin_check(
            f"{side} dichotomy bound", f"dichotomy.{side}_bound", bound - log_norm,
            [{"t": float(a), "s": float(b)} for a, b in zip(t, s)], tol=tol
        ))
    report = stage_report("dichotomy", checks, data={"certificate": cert.model_dump()})
    logger.info(f"Dichotomy certificate {cert.model_dump()} checked: {report.message}")
    return report


def _fit_side(x: np.ndarray, y: np.ndarray, lever: np.ndarray, label: str) -> Tuple[float, float, float]:
    """Slope by regression with intercept, then the least log D and extra exponent covering all rows."""
    moving = x != 0
    if not np.any(moving) or np.ptp(x[moving]) < 1e-12:
        raise DegenerateFitError(f"{label}: regression abscissa has no spread")
    slope = float(np.polyfit(x[moving], y[moving], 1)[0])
    residual = y - slope * x
    lmin = lever.min()
    near = lever <= lmin + 1e-12
    log_d = max(0.0, float(residual[near].max()))
    positive = lever > lmin + 1e-12
    extra = 0.0
    if np.any(positive):
        extra = max(0.0, float(np.max((residual[positive] - log_d) / lever[positive])))
    if extra < 1e-12:
        extra = 0.0
    return slope, log_d, extra


def fit_dichotomy_constants(
    ev: TransitionEvaluator,
    fam: ProjectionFamily,
    rate: GrowthRate,
    grid
) -> DichotomyCertificate:
    """Least-violation certificate from the projected norms on the grid."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise DegenerateFitError("empty grid")
    samples = _dichotomy_samples(ev, fam, rate, grid)
    values = {}
    log_d = 0.0
    for side in ("stable", "unstable"):
        rows = samples[side]
        if not rows.size:
            continue
        rows = rows[np.isfinite(rows[:, 2])]
        t, s, y = rows.T
        x = rate.log_value(t) - rate.log_value(s)
        slope, side_log_d, extra = _fit_side(x, y, np.abs(rate.log_value(s)), side)
        values[side] = (slope, extra)
        log_d = max(log_d, side_log_d)

    if "stable" not in values:
        raise NotApplicableError("stable part is empty; no dichotomy to fit")
    lambda_s, nu = values["stable"]
    lambda_u, omega = values.get("unstable", (None, 0.0))
    try:
        cert = DichotomyCertificate(D=1.05 * float(np.exp(log_d)), lambda_s=lambda_s, lambda_u=lambda_u, nu=nu, omega=omega)
    except ValueError as e:
        raise DegenerateFitError(
            f"fitted constants do not form a dichotomy: {e}",
            details={"lambda_s": lambda_s, "lambda_u": lambda_u, "nu": nu, "omega": omega}
        ) from None
    logger.info(f"Fitted dichotomy constants for '{ev.system.label}': {cert.model_dump()}")
    return cert


def unstable_exponent(cert: DichotomyCertificate) -> float:
    if cert.lambda_u is None:
        raise NotApplicableError("lambda_u is not applicable: the unstable subspace is empty")
    return cert.lambda_u


def _growth_samples(ev, rate, grid):
    grid = np.asarray(grid, dtype=float)
    rows = []
    for s in grid:
        for t, v in zip(grid, _log_norms(ev.transition_fan(s, grid))):
            rows.append((t, s, v))
    return np.array(rows, dtype=float)


def _local_samples(ev, rate, grid, c):
    offsets = c * np.array([-1.0, -0.5, 0.0, 0.5, 1.0])
    rows = []
    for t in np.asarray(grid, dtype=float):
        for s, v in zip(t + offsets, _log_norms(ev.inverse_fan(t, t + offsets))):
            rows.append((t, s, v))
    return np.array(rows, dtype=float)


def verify_bounded_growth(
    ev: TransitionEvaluator,
    rate: GrowthRate,
    cert: GrowthCertificate,
    grid,
    tol: Optional[float] = None
) -> StageReport:
    tol = settings.MARGIN_TOL if tol is None else tol
    t, s, log_norm = _growth_samples(ev, rate, grid).T
    bound = (np.log(cert.D) + cert.lambda_max * np.abs(rate.log_value(t) - rate.log_value(s))
             + cert.theta * np.abs(rate.log_value(s)))
    checks = [margin_check(
        "bounded growth", "growth_bound.global", bound - log_norm,
        [{"t": float(a), "s": float(b)} for a, b in zip(t, s)], tol=tol
    )]
    if cert.local is not None:
        lt, ls, lnorm = _local_samples(ev, rate, grid, cert.local.c).T
        lbound = np.log(cert.local.D_tilde) + cert.local.lambda_tilde * rate.log_value(np.abs(lt))
        checks.append(margin_check(
            "local bound", "growth_bound.local", lbound - lnorm,
            [{"t": float(a), "s": float(b)} for a, b in zip(lt, ls)], tol=tol
        ))
    report = stage_report("bounded_growth", checks, data={"certificate": cert.model_dump()})
    logger.info(f"Growth certificate {cert.model_dump()} checked: {report.message}")
    return report


def fit_growth_constants(ev: TransitionEvaluator, rate: GrowthRate, grid, local: Optional[LocalBound] = None) -> GrowthCertificate:
    t, s, y = _growth_samples(ev, rate, grid).T
    x = np.abs(rate.log_value(t) - rate.log_value(s))
    slope, log_d, theta = _fit_side(x, y, np.abs(rate.log_value(s)), "growth")
    lambda_max = max(slope, 1e-6)
    if slope <= 0:
        # a flat or decaying fan still needs a positive rate; recompute D and theta for it
        residual = y - lambda_max * x
        log_d = max(0.0, float(residual.max()))
    cert = make_growth_certificate(D=1.05 * float(np.exp(log_d)), lambda_max=lambda_max, theta=theta, local=local)
    logger.info(f"Fitted growth constants for '{ev.system.label}': {cert.model_dump()}")
    return cert


def fit_local_bound(ev: TransitionEvaluator, rate: GrowthRate, grid, c: float = 1.0, lambda_tilde: float = 0.0) -> LocalBound:
    t, s, y = _local_samples(ev, rate, grid, c).T
    excess = y - lambda_tilde * rate.log_value(np.abs(t))
    d_tilde = 1.05 * max(1.0, float(np.exp(excess.max())))
    return LocalBound(D_tilde=d_tilde, c=c, lambda_tilde=lambda_tilde)


# ---------------------------------------------------------------------------
# Operator residuals
# ---------------------------------------------------------------------------

def check_cocycle(ev: TransitionEvaluator, rng: np.random.Generator, count: int = 50, radius: float = 5.0,
                  tol: Optional[float] = None) -> StageReport:
    """Relative cocycle residual ‖Ψ(t,s)Ψ(s,r) − Ψ(t,r)‖ / (‖Ψ(t,s)‖‖Ψ(s,r)‖)."""
    tol = settings.COCYCLE_TOL if tol is None else tol
    triples = rng.uniform(-radius, radius, size=(count, 3))
    cocycle, inverse, witnesses = [], [], []
    eye = np.eye(ev.n)
    for t, s, r in triples:
        ts, sr, tr = ev.transition(t, s), ev.transition(s, r), ev.transition(t, r)
        scale = max(1.0, float(spectral_norm(ts) * spectral_norm(sr)))
        cocycle.append(tol - float(spectral_norm(ts @ sr - tr)) / scale)
        st = ev.transition(s, t)
        scale = max(1.0, float(spectral_norm(ts) * spectral_norm(st)))
        inverse.append(tol - float(spectral_norm(ts @ st - eye)) / scale)
        witnesses.append({"t": float(t), "s": float(s), "r": float(r)})
    checks = [
        margin_check("cocycle identity", "evolution.cocycle", cocycle, witnesses),
        margin_check("inverse identity", "evolution.inverse", inverse, witnesses),
    ]
    return stage_report("evolution", checks)


def check_projection(ev: TransitionEvaluator, fam: ProjectionFamily, grid, tol: Optional[float] = None,
                     h: float = 1e-4) -> StageReport:
    """Idempotence, commutation with Ψ, and dπ/dt = Aπ − πA by central differences."""
    tol = settings.PROJECTION_TOL if tol is None else tol
    grid = np.asarray(grid, dtype=float)
    idem, comm, deriv, total, wit, pair_wit = [], [], [], [], [], []
    for t in grid:
        p = fam.projection(t)
        scale = max(1.0, float(spectral_norm(p)) ** 2)
        idem.append(tol - float(spectral_norm(p @ p - p)) / scale)
        total.append(tol - float(spectral_norm(p + fam.complement(t) - np.eye(ev.n))) / scale)
        a = ev.system.matrix(t)
        exact = a @ p - p @ a
        fd = (fam.projection(t + h) - fam.projection(t - h)) / (2 * h)
        dscale = 1.0 + float(spectral_norm(a) * spectral_norm(p))
        deriv.append(1e-5 - float(spectral_norm(fd - exact)) / dscale)
        wit.append({"t": float(t)})
    for s, t in zip(grid[:-1], grid[1:]):
        m = ev.transition(t, s)
        pt, ps = fam.projection(t), fam.projection(s)
        scale = max(1.0, float(spectral_norm(pt) * spectral_norm(m) * spectral_norm(ps)))
        comm.append(tol - float(spectral_norm(pt @ m - m @ ps)) / scale)
        pair_wit.append({"t": float(t), "s": float(s)})
    ranks = [int(np.linalg.matrix_rank(fam.projection(t), tol=1e-8)) for t in grid]
    checks = [
        margin_check("projection idempotent", "projection.idempotent", idem, wit),
        margin_check("sides sum to the identity", "projection.complement", total, wit),
        margin_check("projection commutes with flow", "projection.commutation", comm, pair_wit),
        margin_check("projection derivative identity", "projection.derivative", deriv, wit),
        margin_check("projection rank constant", "projection.rank",
                     [0.0 if r == fam.stable_rank else -1.0 for r in ranks], wit),
    ]
    return stage_report("projection", checks)
