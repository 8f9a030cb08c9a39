"""
Lyapunov-Perron fixed points: graphs g_s, g_u of the invariant manifolds and
leaves h_s, h_u of the invariant foliations of x' = A(t)x + f(t,x).

Every solve runs the same Picard iteration on a uniform grid
κ_j = τ + dir·h·j, j = 0..m, with dir = +1 for stable objects and −1 for
unstable ones.  The projection matching the direction of travel ("carried")
is integrated from τ, the other one ("escaping") from the far end of the
truncated horizon back to κ_j:

    x_j = Ψ(κ_j,τ)P_c (start + dir·∫_0^j P_c Ψ(τ,κ) F) − dir·Ψ(κ_j,τ)P_e ∫_j^m P_e Ψ(τ,κ) F

Projecting before integrating keeps the two parts from cancelling.
"""
import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_simpson

from core.config import settings
from core.exceptions import ConvergenceError, GateError, SubspaceError
from core.response import CheckResult, StageReport, margin_check, stage_report
from models.growth import GrowthRate
from models.perturbation import Perturbation
from schemas.certificate import DichotomyCertificate
from schemas.settings import LPSettings
from services.growth import horizon
from services.linflow import ProjectionFamily, TransitionEvaluator
from services.nonlinear import PerturbedFlow

logger = logging.getLogger(__name__)

STABLE, UNSTABLE = "stable", "unstable"


@dataclass
class ManifoldPoint:
    """Point ξ + g(τ, ξ) of a manifold graph together with its solution on the grid."""
    side: str
    tau: float
    xi: np.ndarray
    value: np.ndarray
    times: np.ndarray
    trajectory: np.ndarray
    iterations: int
    deltas: List[float] = field(default_factory=list)
    T_h: float = 0.0

    @property
    def point(self) -> np.ndarray:
        return self.xi + self.value


@dataclass
class FoliationLeaf:
    """Leaf point ζ + h(τ, ζ, x) of the leaf through the base point x."""
    side: str
    tau: float
    base: np.ndarray
    zeta: np.ndarray
    eta_off: np.ndarray
    value: np.ndarray
    times: np.ndarray
    offsets: np.ndarray
    iterations: int
    deltas: List[float] = field(default_factory=list)
    T_h: float = 0.0
    tail: float = 0.0

    @property
    def point(self) -> np.ndarray:
        return self.zeta + self.value


# ---------------------------------------------------------------------------
# Hypotheses
# ---------------------------------------------------------------------------

def contraction_factor(cert: DichotomyCertificate, delta_f: float, theta: float) -> float:
    """δ̃_f = δ_f D (1/(−λ_s+ν−θ) + 1/(λ_u−θ+ω)); the unstable term drops without λ_u."""
    total = 1.0 / (-cert.lambda_s + cert.nu - theta)
    if cert.lambda_u is not None:
        total += 1.0 / (cert.lambda_u - theta + cert.omega)
    return delta_f * cert.D * total


def hypothesis_checks(cert: DichotomyCertificate, p: Perturbation) -> List[CheckResult]:
    """Margins of θ ≥ max(ν,ω), λ_s < ν−θ, λ_u > θ−ω and δ̃_f < 1."""
    theta = p.theta
    items = [
        ("theta >= max(nu, omega)", "hypothesis.theta", theta - max(cert.nu, cert.omega)),
        ("lambda_s < nu - theta", "hypothesis.stable_gap", cert.nu - theta - cert.lambda_s),
    ]
    if cert.lambda_u is not None:
        items.append(("lambda_u > theta - omega", "hypothesis.unstable_gap", cert.lambda_u - theta + cert.omega))
    gaps_ok = all(m > 0 for _, ref, m in items if ref != "hypothesis.theta")
    tilde = contraction_factor(cert, p.delta_f, theta) if gaps_ok else math.inf
    items.append(("contraction factor delta_tilde_f < 1", "hypothesis.contraction", 1.0 - tilde))
    checks = []
    for name, ref, margin in items:
        strict = ref != "hypothesis.theta"
        passed = margin > 0 if strict else margin >= 0
        checks.append(CheckResult(name=name, ref=ref, passed=passed, worst_margin=margin, samples=1))
    return checks


def require_hypotheses(cert: DichotomyCertificate, p: Perturbation):
    for check in hypothesis_checks(cert, p):
        if not check.passed:
            raise GateError(check.name, f"margin {check.worst_margin}", details={"ref": check.ref})


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------

class LyapunovPerronSolver:
    def __init__(
        self,
        ev: TransitionEvaluator,
        fam: ProjectionFamily,
        p: Perturbation,
        rate: GrowthRate,
        cert: DichotomyCertificate,
        config: Optional[LPSettings] = None,
        flow: Optional[PerturbedFlow] = None
    ):
        require_hypotheses(cert, p)
        self.ev, self.fam, self.p, self.rate, self.cert = ev, fam, p, rate, cert
        self.config = config or LPSettings()
        self.flow = flow or PerturbedFlow(ev, p)
        self.n = ev.n
        self.delta_tilde = contraction_factor(cert, p.delta_f, p.theta)
        self._lock = threading.Lock()
        self._grids: Dict[Tuple[float, int, float], tuple] = {}
        self._bases: Dict[tuple, np.ndarray] = {}

    # -- constants -------------------------------------------------------------
    def lipschitz_budget(self, side: str) -> float:
        """Lip(g_s) = Lip(h_s) = δ_f D²/((1−δ̃_f)(λ_u−θ+ω)); the unstable side uses −λ_s+ν−θ."""
        cert, theta = self.cert, self.p.theta
        if side == STABLE:
            if cert.lambda_u is None:
                return 0.0
            gap = cert.lambda_u - theta + cert.omega
        else:
            gap = -cert.lambda_s + cert.nu - theta
        return self.p.delta_f * cert.D ** 2 / ((1.0 - self.delta_tilde) * gap)

    def _escape_rates(self, direction: int) -> Optional[Tuple[float, float]]:
        cert = self.cert
        if direction == 1:
            return None if cert.lambda_u is None else (cert.lambda_u, cert.omega)
        return -cert.lambda_s, cert.nu

    def _decay(self, direction: int, leaf: bool) -> Optional[Tuple[float, float]]:
        """Decay rate of the escaping integrand and its nonuniform exponent; None when nothing escapes."""
        rates = self._escape_rates(direction)
        if rates is None or self.p.is_zero:
            return None
        lam, extra = rates
        k = lam - self.p.theta + extra
        if leaf:
            # leaf offsets also shrink along the carried direction
            carried = -self.cert.lambda_s if direction == 1 else (self.cert.lambda_u or 0.0)
            k += max(carried - self.cert.D * self.p.delta_f, 0.0)
        return k, extra

    def _tail_scale(self, tau: float, k: float, extra: float) -> float:
        return self.cert.D * self.p.delta_f * math.exp(extra * abs(float(self.rate.log_value(tau)))) / k

    def tail_bound(self, tau: float, direction: int, T: float, leaf: bool = False) -> float:
        """
        Bound on the part of the escaping integral beyond τ ± T, per unit of state
        norm, or per unit of leaf offset at τ when leaf is set.
        """
        decay = self._decay(direction, leaf)
        if decay is None:
            return 0.0
        k, extra = decay
        gap = abs(float(self.rate.log_value(tau + direction * T) - self.rate.log_value(tau)))
        return self._tail_scale(tau, k, extra) * math.exp(-k * gap)

    def horizon(self, tau: float, direction: int, leaf: bool = False) -> float:
        if self.config.T_h is not None:
            return self.config.T_h
        decay = self._decay(direction, leaf)
        if decay is None:
            return min(self.config.T_h_cap, 10.0)
        k, extra = decay
        target = math.log(self._tail_scale(tau, k, extra) / self.config.fp_tol) / k
        return max(horizon(self.rate, tau, target, self.config.T_h_cap, direction), 4 * self.config.step)

    # -- grid --------------------------------------------------------------------
    def _grid(self, tau: float, direction: int, T_h: float):
        key = (float(tau), direction, float(T_h))
        with self._lock:
            cached = self._grids.get(key)
        if cached is not None:
            return cached
        # whole steps so that grids of different horizons share their nodes
        h = self.config.step
        m = max(int(math.ceil(T_h / h - 1e-9)), 4)
        times = tau + direction * h * np.arange(m + 1)
        carried, escaping = (STABLE, UNSTABLE) if direction == 1 else (UNSTABLE, STABLE)
        fam = self.fam
        grid = (
            times, h, fam.side(carried, tau), fam.side(escaping, tau),
            fam.transport(times, tau, carried), fam.transport(times, tau, escaping),
            fam.pullback(tau, times, carried), fam.pullback(tau, times, escaping),
        )
        with self._lock:
            if len(self._grids) > 256:
                self._grids.clear()
            self._grids[key] = grid
        return grid

    # -- Picard iteration --------------------------------------------------------
    def _iterate(self, tau: float, direction: int, start: np.ndarray, forcing: Callable, T_h: float,
                 scale: Optional[np.ndarray] = None):
        times, h, p_c, p_e, fp_c, fp_e, p_c_g, p_e_g = self._grid(tau, direction, T_h)
        linear = fp_c @ start
        x = linear.copy()
        scale = np.ones(times.size) if scale is None else scale
        deltas: List[float] = []
        for k in range(1, self.config.max_iter + 1):
            f = forcing(times, x.T).T
            carried = cumulative_simpson(np.einsum("jab,jb->ja", p_c_g, f), dx=h, axis=0, initial=0)
            escaping = np.flip(cumulative_simpson(np.flip(np.einsum("jab,jb->ja", p_e_g, f), axis=0),
                                                  dx=h, axis=0, initial=0), axis=0)
            new = (linear + direction * np.einsum("jab,jb->ja", fp_c, carried)
                   - direction * np.einsum("jab,jb->ja", fp_e, escaping))
            delta = float(np.max(np.linalg.norm(new - x, axis=1) / scale))
            deltas.append(delta)
            x = new
            if delta < self.config.fp_tol:
                logger.debug(f"Lyapunov-Perron fixed point at tau={tau:g} after {k} iterations (T_h={T_h:.3g})")
                return times, x, k, deltas
            if k > 2 and delta > 1e6 * deltas[0]:
                break
        raise ConvergenceError(
            f"Lyapunov-Perron iteration at tau={tau:g} did not converge (last delta {deltas[-1]:.3g})",
            details={"tau": tau, "deltas": deltas[-5:], "T_h": T_h}
        )

    def _check_subspace(self, tau: float, v: np.ndarray, direction: int, label: str):
        off = self.fam.complement(tau) @ v if direction == 1 else self.fam.projection(tau) @ v
        if np.linalg.norm(off) > 1e-8 * max(1.0, float(np.linalg.norm(v))):
            side = "stable" if direction == 1 else "unstable"
            raise SubspaceError(f"{label} must lie in the {side} subspace at tau={tau:g}", field=label)

    def _manifold(self, tau: float, xi, direction: int, T_h: Optional[float]) -> ManifoldPoint:
        tau = float(tau)
        xi = np.asarray(xi, dtype=float)
        self._check_subspace(tau, xi, direction, "xi")
        side = STABLE if direction == 1 else UNSTABLE
        T_h = self.horizon(tau, direction) if T_h is None else T_h
        times, _, _, p_e, fp_c, *_ = self._grid(tau, direction, T_h)
        if not np.any(xi) or not np.any(p_e) or self.p.is_zero:
            return ManifoldPoint(side, tau, xi, np.zeros(self.n), times, fp_c @ xi, 0, [], T_h)
        times, traj, its, deltas = self._iterate(tau, direction, xi, self.p, T_h)
        value = p_e @ (traj[0] - xi)
        return ManifoldPoint(side, tau, xi, value, times, traj, its, deltas, T_h)

    def stable_manifold(self, tau: float, xi, T_h: Optional[float] = None) -> ManifoldPoint:
        return self._manifold(tau, xi, 1, T_h)

    def unstable_manifold(self, tau: float, xi, T_h: Optional[float] = None) -> ManifoldPoint:
        return self._manifold(tau, xi, -1, T_h)

    def _base_trajectory(self, tau: float, x: np.ndarray, times: np.ndarray, direction: int) -> np.ndarray:
        """
        Base solution on the leaf grid, possibly shorter than the grid: integration
        stops once the flow needs more than config.base_budget evaluations per step.
        Tolerances loosen where the leaf kernel has decayed.
        """
        key = (tau, float(times[-1]), times.size, x.tobytes())
        with self._lock:
            cached = self._bases.get(key)
        if cached is not None:
            return cached
        chunk = 25
        k, _ = self._decay(direction, leaf=True)
        starts = times[:-1:chunk]
        weights = np.maximum(self.rate.ratio_power(starts, tau, -direction * k), 1e-300)
        rtol, atol = self.flow.rtol, self.flow.atol
        tolerances = [(min(rtol / w, max(rtol, 1e-6)), min(atol / w, max(atol, 1e-8))) for w in weights]
        cached = self.flow.trajectory_within(tau, x, times, self.config.base_budget, chunk, tolerances)
        with self._lock:
            if len(self._bases) > 512:
                self._bases.clear()
            self._bases[key] = cached
        return cached

    def _leaf(self, tau: float, zeta, x, direction: int, T_h: Optional[float]) -> FoliationLeaf:
        tau = float(tau)
        zeta = np.asarray(zeta, dtype=float)
        x = np.asarray(x, dtype=float)
        self._check_subspace(tau, zeta, direction, "zeta")
        side = STABLE if direction == 1 else UNSTABLE
        T_h = self.horizon(tau, direction, leaf=True) if T_h is None else T_h
        times, _, p_c, p_e, fp_c, *_ = self._grid(tau, direction, T_h)
        eta_off = zeta - p_c @ x
        if not np.any(p_e) or self.p.is_zero:
            return FoliationLeaf(side, tau, x, zeta, eta_off, p_e @ x, times, fp_c @ eta_off, 0, [], T_h)
        base = self._base_trajectory(tau, x, times, direction)
        if base.shape[0] < times.size:
            T_h = self.config.step * (base.shape[0] - 1)
            times, *_ = self._grid(tau, direction, T_h)
            base = base[:times.size]
            logger.debug(f"Leaf at tau={tau:g} truncated to T_h={T_h:.3g} by the base trajectory")
        tail = self.tail_bound(tau, direction, T_h, leaf=True) * float(np.linalg.norm(eta_off))
        perturbation = self.p

        def forcing(ts, offsets):
            return perturbation(ts, offsets + base.T) - perturbation(ts, base.T)

        scale = np.maximum(1.0, np.linalg.norm(base, axis=1))
        times, offsets, its, deltas = self._iterate(tau, direction, eta_off, forcing, T_h, scale)
        value = p_e @ (offsets[0] + x)
        return FoliationLeaf(side, tau, x, zeta, eta_off, value, times, offsets, its, deltas, T_h, tail)

    def stable_leaf(self, tau: float, zeta, x, T_h: Optional[float] = None) -> FoliationLeaf:
        return self._leaf(tau, zeta, x, 1, T_h)

    def unstable_leaf(self, tau: float, zeta, x, T_h: Optional[float] = None) -> FoliationLeaf:
        return self._leaf(tau, zeta, x, -1, T_h)

    # -- convenience -------------------------------------------------------------
    def g_s(self, tau: float, xi) -> np.ndarray:
        return self.stable_manifold(tau, xi).value

    def g_u(self, tau: float, xi) -> np.ndarray:
        return self.unstable_manifold(tau, xi).value

    def h_s(self, tau: float, zeta, x) -> np.ndarray:
        return self.stable_leaf(tau, zeta, x).value

    def h_u(self, tau: float, zeta, x) -> np.ndarray:
        return self.unstable_leaf(tau, zeta, x).value


def solve_stable_manifold(ev, fam, p, rate, cert, tau, xi, config: Optional[LPSettings] = None) -> ManifoldPoint:
    return LyapunovPerronSolver(ev, fam, p, rate, cert, config).stable_manifold(tau, xi)


def solve_unstable_manifold(ev, fam, p, rate, cert, tau, xi, config: Optional[LPSettings] = None) -> ManifoldPoint:
    return LyapunovPerronSolver(ev, fam, p, rate, cert, config).unstable_manifold(tau, xi)


def solve_stable_foliation(ev, fam, p, rate, cert, tau, zeta, x, config: Optional[LPSettings] = None) -> FoliationLeaf:
    return LyapunovPerronSolver(ev, fam, p, rate, cert, config).stable_leaf(tau, zeta, x)


def solve_unstable_foliation(ev, fam, p, rate, cert, tau, zeta, x, config: Optional[LPSettings] = None) -> FoliationLeaf:
    return LyapunovPerronSolver(ev, fam, p, rate, cert, config).unstable_leaf(tau, zeta, x)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

def invariance_threshold(config: LPSettings) -> float:
    return max(10.0 * config.fp_tol, settings.INVARIANCE_FLOOR)


def invariance_residual(solver: LyapunovPerronSolver, obj, t: float) -> float:
    """Flow a graph or leaf point to t and measure its distance from the object solved at t."""
    t = float(t)
    p_t, q_t = solver.fam.projection(t), solver.fam.complement(t)
    moved = solver.flow.flow(t, obj.tau, obj.point)
    if isinstance(obj, ManifoldPoint):
        if obj.side == STABLE:
            again = solver.stable_manifold(t, p_t @ moved)
            return float(np.linalg.norm(q_t @ moved - again.value))
        again = solver.unstable_manifold(t, q_t @ moved)
        return float(np.linalg.norm(p_t @ moved - again.value))
    base_t = solver.flow.flow(t, obj.tau, obj.base)
    if obj.side == STABLE:
        again = solver.stable_leaf(t, p_t @ moved, base_t)
        return float(np.linalg.norm(q_t @ moved - again.value))
    again = solver.unstable_leaf(t, q_t @ moved, base_t)
    return float(np.linalg.norm(p_t @ moved - again.value))


def contraction_margins(obj, delta_tilde: float, slack: float) -> List[float]:
    """Per-iteration margins of delta_{k+1} ≤ δ̃_f (1+slack) delta_k after the first step."""
    d = obj.deltas
    bound = delta_tilde * (1.0 + slack)
    return [bound * a - b for a, b in zip(d[1:-1], d[2:]) if a > 100 * np.finfo(float).eps]


def continuity_diagnostic(solver: LyapunovPerronSolver, leaf: FoliationLeaf, other: FoliationLeaf,
                          rho: Optional[float]) -> Optional[float]:
    """sup_j ‖p_j − p̃_j‖ (μ(κ_j)/μ(τ))^{dir·ϱ} / ‖x − x̃‖ for ϱ ∈ (1, −λ_s); None when the interval is empty."""
    if rho is None or not 1.0 < rho < -solver.cert.lambda_s:
        return None
    dist = float(np.linalg.norm(leaf.base - other.base))
    if dist == 0.0 or leaf.offsets.shape != other.offsets.shape:
        return None
    direction = 1 if leaf.side == STABLE else -1
    weights = solver.rate.ratio_power(leaf.times, leaf.tau, direction * rho)
    return float(np.max(np.linalg.norm(leaf.offsets - other.offsets, axis=1) * weights) / dist)


def _sample_in(basis_proj: np.ndarray, rng: np.random.Generator, radius: float) -> np.ndarray:
    return basis_proj @ rng.uniform(-radius, radius, basis_proj.shape[0])


def check_manifolds(solver: LyapunovPerronSolver, taus, rng: np.random.Generator, count: int = 4,
                    radius: float = 2.0) -> StageReport:
    """Zero preservation, Lipschitz budgets, contraction, invariance and truncation soundness."""
    cfg = solver.config
    inv_tol = invariance_threshold(cfg)
    rows: Dict[str, list] = {k: [] for k in ("zero", "lip", "contraction", "invariance", "doubling")}
    wits: Dict[str, list] = {k: [] for k in rows}
    horizons, iterations, tails = [], [], []
    for tau in taus:
        tau = float(tau)
        pi_tau = solver.fam.projection(tau)
        for side, direction, proj in ((STABLE, 1, pi_tau), (UNSTABLE, -1, solver.fam.complement(tau))):
            if not np.any(proj):
                continue
            solve = solver.stable_manifold if direction == 1 else solver.unstable_manifold
            zero = solve(tau, np.zeros(solver.n))
            rows["zero"].append(cfg.fp_tol - float(np.linalg.norm(zero.value)))
            wits["zero"].append({"tau": tau, "side": side})
            budget = solver.lipschitz_budget(side) * (1.0 + cfg.lip_slack)
            extra = solver.cert.nu if side == STABLE else solver.cert.omega
            budget *= float(solver.rate.nonuniform_factor(tau, extra))
            for _ in range(count):
                xi, xi2 = _sample_in(proj, rng, radius), _sample_in(proj, rng, radius)
                a, b = solve(tau, xi), solve(tau, xi2)
                horizons.append(a.T_h)
                tails.append(solver.tail_bound(tau, direction, a.T_h))
                iterations.append(a.iterations)
                gap = float(np.linalg.norm(xi - xi2))
                if gap > 0:
                    rows["lip"].append(budget * gap - float(np.linalg.norm(a.value - b.value)))
                    wits["lip"].append({"tau": tau, "side": side, "xi": xi.tolist(), "xi_tilde": xi2.tolist()})
                ratios = contraction_margins(a, solver.delta_tilde, cfg.contraction_slack)
                rows["contraction"].extend(ratios)
                wits["contraction"].extend({"tau": tau, "side": side, "iteration": k + 2} for k in range(len(ratios)))
            t = tau + direction
            rows["invariance"].append(inv_tol - invariance_residual(solver, a, t))
            wits["invariance"].append({"tau": tau, "t": t, "side": side, "xi": a.xi.tolist()})
            longer = solve(tau, a.xi, T_h=min(2.0 * a.T_h, 2.0 * cfg.T_h_cap))
            rows["doubling"].append(10.0 * cfg.fp_tol - float(np.linalg.norm(longer.value - a.value)))
            wits["doubling"].append({"tau": tau, "side": side, "T_h": a.T_h})
    checks = [
        margin_check("graphs vanish at zero", "manifold.zero", rows["zero"], wits["zero"]),
        margin_check("graph Lipschitz budget", "manifold.lipschitz", rows["lip"], wits["lip"]),
        margin_check("Picard contraction", "manifold.contraction", rows["contraction"], wits["contraction"],
                     tol=cfg.fp_tol),
        margin_check("graph invariance under the flow", "manifold.invariance", rows["invariance"], wits["invariance"]),
        margin_check("doubling the horizon", "manifold.truncation", rows["doubling"], wits["doubling"]),
    ]
    data = {
        "delta_tilde": solver.delta_tilde,
        "lipschitz": {STABLE: solver.lipschitz_budget(STABLE), UNSTABLE: solver.lipschitz_budget(UNSTABLE)},
        "T_h": horizons,
        "tail_bound": max(tails) if tails else 0.0,
        "iterations": iterations,
        "invariance_threshold": inv_tol,
    }
    report = stage_report("manifold", checks, data=data)
    logger.info(f"Invariant manifolds: {report.message}")
    return report


def check_foliations(solver: LyapunovPerronSolver, taus, rng: np.random.Generator, count: int = 3,
                     radius: float = 2.0) -> StageReport:
    """Leaf through its base point, leaf Lipschitz budgets, invariance, shared leaves and continuity."""
    cfg = solver.config
    inv_tol = invariance_threshold(cfg)
    rows: Dict[str, list] = {k: [] for k in ("through", "lip", "invariance", "shared")}
    wits: Dict[str, list] = {k: [] for k in rows}
    continuity, tails = [], []
    for tau in taus:
        tau = float(tau)
        pi_tau = solver.fam.projection(tau)
        for side, direction, proj in ((STABLE, 1, pi_tau), (UNSTABLE, -1, solver.fam.complement(tau))):
            opposite = solver.fam.complement(tau) if direction == 1 else pi_tau
            if not np.any(proj) or not np.any(opposite):
                continue
            solve = solver.stable_leaf if direction == 1 else solver.unstable_leaf
            budget = solver.lipschitz_budget(side) * (1.0 + cfg.lip_slack)
            for _ in range(count):
                x = rng.uniform(-radius, radius, solver.n)
                own = solve(tau, proj @ x, x)
                rows["through"].append(cfg.fp_tol * 10 - float(np.linalg.norm(own.value - opposite @ x)))
                wits["through"].append({"tau": tau, "side": side, "x": x.tolist()})

                zeta, zeta2 = _sample_in(proj, rng, radius), _sample_in(proj, rng, radius)
                a, b = solve(tau, zeta, x), solve(tau, zeta2, x)
                tails.append(a.tail)
                gap = float(np.linalg.norm(zeta - zeta2))
                if gap > 0:
                    rows["lip"].append(budget * gap - float(np.linalg.norm(a.value - b.value)))
                    wits["lip"].append({"tau": tau, "side": side, "x": x.tolist(), "zeta": zeta.tolist()})

                rows["invariance"].append(inv_tol - invariance_residual(solver, a, tau + direction))
                wits["invariance"].append({"tau": tau, "side": side, "x": x.tolist(), "zeta": zeta.tolist()})

                # a second base point on the same leaf spans the same leaf
                other = a.point
                c = solve(tau, zeta2, other)
                rows["shared"].append(10 * inv_tol - float(np.linalg.norm(c.value - b.value)))
                wits["shared"].append({"tau": tau, "side": side, "x": x.tolist(), "x_tilde": other.tolist()})

                near = solve(tau, zeta, x + 1e-3 * rng.normal(size=solver.n))
                value = continuity_diagnostic(solver, a, near, cfg.rho)
                if value is not None:
                    continuity.append(value)
    checks = [
        margin_check("leaf passes through its base point", "foliation.through_base", rows["through"], wits["through"]),
        margin_check("leaf Lipschitz budget", "foliation.lipschitz", rows["lip"], wits["lip"]),
        margin_check("leaf invariance under the flow", "foliation.invariance", rows["invariance"], wits["invariance"]),
        margin_check("base points on one leaf give one leaf", "foliation.shared_leaf", rows["shared"], wits["shared"]),
    ]
    data = {
        "continuity": max(continuity) if continuity else None,
        "rho": cfg.rho,
        "leaf_tail_bound": max(tails) if tails else 0.0,
    }
    report = stage_report("foliation", checks, data=data)
    logger.info(f"Invariant foliations: {report.message}")
    return report


def check_straightening(solver: LyapunovPerronSolver, taus, rng: np.random.Generator, count: int = 3,
                        radius: float = 2.0) -> StageReport:
    """Per-unit-time invariance defects of the manifolds used as straightened axes."""
    inv_tol = invariance_threshold(solver.config)
    margins, wits = [], []
    for tau in taus:
        tau = float(tau)
        pi_tau = solver.fam.projection(tau)
        for side, direction, proj in ((STABLE, 1, pi_tau), (UNSTABLE, -1, solver.fam.complement(tau))):
            if not np.any(proj):
                continue
            solve = solver.stable_manifold if direction == 1 else solver.unstable_manifold
            for _ in range(count):
                point = solve(tau, _sample_in(proj, rng, radius))
                for step in (0.5, 1.0):
                    t = tau + direction * step
                    margins.append(inv_tol - invariance_residual(solver, point, t) / step)
                    wits.append({"tau": tau, "t": t, "side": side, "xi": point.xi.tolist()})
    check = margin_check("straightened axes are invariant", "manifold.straightening", margins, wits)
    return stage_report("straightening", [check])
