"""
Topological conjugacy between the decoupled nonlinear flows and the linear flow.

A nonzero state on the stable subspace is carried along its own trajectory to
the section V = −1 and brought back to the base time by the linear flow; on the
unstable subspace the section is V = +1.  Both sides share the same machinery
because V increases along the stable and the unstable subsystem alike.
"""
import itertools
import logging
import math
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.optimize import brentq

from core.config import settings
from core.exceptions import ConvergenceError, GateError, ValidationError
from core.response import CheckResult, StageReport, margin_check, stage_report
from schemas.certificate import DichotomyCertificate, GrowthCertificate, StrictCertificate
from services.linflow import spectral_norm
from services.lyapunov import QuadraticLyapunov
from services.manifolds import STABLE, UNSTABLE
from services.nonlinear import PerturbedFlow, phi
from services.splitting import DecoupledFlows, SplitMap

logger = logging.getLogger(__name__)

ZERO_NORM = 1e-12
Path = Callable[[float], np.ndarray]


def monotone_guard(cert: DichotomyCertificate, delta_f: float, eta: float) -> CheckResult:
    """δ_f < η/(2D²), which keeps V strictly increasing along the decoupled flows."""
    bound = eta / (2.0 * cert.D ** 2)
    return CheckResult(name="delta_f < eta / (2 D^2)", ref="conjugacy.monotone_guard", passed=delta_f < bound,
                       worst_margin=bound - delta_f, samples=1)


class CrossingSolver:
    """Crossing times of the level V = ∓1 along decoupled (ℓ) and linear (κ) trajectories."""

    def __init__(self, q: QuadraticLyapunov, df: DecoupledFlows, side: str = STABLE,
                 root_tol: Optional[float] = None, bracket_cap: Optional[float] = None):
        self.q = q
        self.df = df
        self.side = side
        self.level = -1.0 if side == STABLE else 1.0
        self.root_tol = settings.ROOT_TOL if root_tol is None else root_tol
        self.bracket_cap = settings.BRACKET_CAP if bracket_cap is None else bracket_cap
        self.ev = q.ev

    def projector(self, t: float) -> np.ndarray:
        return self.q.fam.side(self.side, t)

    def nonlinear(self, tau: float, x0) -> Path:
        return self.df.dense(self.side, tau, x0)

    def linear(self, tau: float, x0) -> Path:
        x0 = np.asarray(x0, dtype=float)
        if self.ev.system.is_constant:
            return lambda t: self.ev.transition(t, tau) @ x0
        return self.ev.dense(tau, x0)

    def crossing(self, tau: float, path: Path) -> float:
        """Root of t ↦ V(t, path(t)) − level, bracketed by doubling away from τ."""
        tau = float(tau)

        def gap(t):
            v = self.q.value(t, path(t))
            if not math.isfinite(v):
                raise ConvergenceError(f"V is not finite at t={t:g}", details={"t": t})
            return v - self.level

        g0 = gap(tau)
        if g0 == 0.0:
            return tau
        direction = 1 if g0 < 0 else -1
        near, r = tau, 1.0
        while True:
            far = tau + direction * r
            g_far = gap(far)
            if direction * g_far >= 0:
                break
            near, r = far, 2.0 * r
            if r > self.bracket_cap:
                raise ConvergenceError(
                    f"no crossing of V = {self.level:g} within {self.bracket_cap:g} of tau={tau:g}",
                    details={"tau": tau, "V_range": [g0 + self.level, g_far + self.level]}
                )
        lo, hi = sorted((near, far))
        root = brentq(gap, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=200)
        return float(root)

    def _require_nonzero(self, x0: np.ndarray):
        if np.linalg.norm(x0) < ZERO_NORM:
            raise ValidationError("crossing time is undefined at the origin", field="x0")

    def crossing_time_nl(self, tau: float, x0) -> float:
        x0 = np.asarray(x0, dtype=float)
        self._require_nonzero(x0)
        return self.crossing(tau, self.nonlinear(tau, x0))

    def crossing_time_lin(self, tau: float, x0) -> float:
        x0 = np.asarray(x0, dtype=float)
        self._require_nonzero(x0)
        return self.crossing(tau, self.linear(tau, x0))


def crossing_time_nl(cs: CrossingSolver, tau: float, x0) -> float:
    return cs.crossing_time_nl(tau, x0)


def crossing_time_lin(cs: CrossingSolver, tau: float, x0) -> float:
    return cs.crossing_time_lin(tau, x0)


class ConjugacyMap:
    """𝔉 = 𝔉_s ⊕ 𝔉_u onto the linear flow, its inverse 𝔏, and 𝔊 = 𝔉 ∘ 𝔖."""

    def __init__(self, stable: Optional[CrossingSolver], unstable: Optional[CrossingSolver],
                 split: Optional[SplitMap] = None):
        self.sides: Dict[str, CrossingSolver] = {}
        if stable is not None:
            self.sides[STABLE] = stable
        if unstable is not None:
            self.sides[UNSTABLE] = unstable
        if not self.sides:
            raise ValidationError("a conjugacy needs at least one nontrivial side")
        self.split = split
        any_side = next(iter(self.sides.values()))
        self.fam = any_side.q.fam
        self.ev = any_side.ev
        self.n = any_side.q.n

    # -- one side ---------------------------------------------------------------
    def to_linear_side(self, side: str, tau: float, x0) -> np.ndarray:
        """Ψ_s(τ, ℓ) x_s(ℓ, τ, x0) with ℓ the crossing time of the decoupled trajectory."""
        x0 = np.asarray(x0, dtype=float)
        if np.linalg.norm(x0) < ZERO_NORM:
            return np.zeros(self.n)
        cs = self.sides[side]
        path = cs.nonlinear(tau, x0)
        ell = cs.crossing(tau, path)
        return cs.projector(tau) @ (self.ev.transition(tau, ell) @ path(ell))

    def from_linear_side(self, side: str, tau: float, x0) -> np.ndarray:
        """x_s(τ, κ, Ψ_s(κ, τ)x0) with κ the crossing time of the linear trajectory."""
        x0 = np.asarray(x0, dtype=float)
        if np.linalg.norm(x0) < ZERO_NORM:
            return np.zeros(self.n)
        cs = self.sides[side]
        kappa = cs.crossing(tau, cs.linear(tau, x0))
        z = cs.projector(kappa) @ (self.ev.transition(kappa, tau) @ x0)
        return cs.nonlinear(kappa, z)(tau)

    def to_linear_stable(self, tau: float, x0) -> np.ndarray:
        return self.to_linear_side(STABLE, tau, x0)

    def from_linear_stable(self, tau: float, x0) -> np.ndarray:
        return self.from_linear_side(STABLE, tau, x0)

    def to_linear_unstable(self, tau: float, x0) -> np.ndarray:
        return self.to_linear_side(UNSTABLE, tau, x0)

    def from_linear_unstable(self, tau: float, x0) -> np.ndarray:
        return self.from_linear_side(UNSTABLE, tau, x0)

    # -- assembled --------------------------------------------------------------
    def _parts(self, tau: float, x: np.ndarray):
        return {STABLE: self.fam.projection(tau) @ x, UNSTABLE: self.fam.complement(tau) @ x}

    def to_linear(self, tau: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        parts = self._parts(tau, x)
        return sum((self.to_linear_side(side, tau, parts[side]) for side in self.sides), np.zeros(self.n))

    def from_linear(self, tau: float, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        parts = self._parts(tau, y)
        return sum((self.from_linear_side(side, tau, parts[side]) for side in self.sides), np.zeros(self.n))

    def conjugacy(self, tau: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if np.linalg.norm(x) < ZERO_NORM:
            return np.zeros(self.n)
        straight = self.split.forward(tau, x) if self.split is not None else x
        return self.to_linear(tau, straight)

    def inverse_conjugacy(self, tau: float, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if np.linalg.norm(y) < ZERO_NORM:
            return np.zeros(self.n)
        back = self.from_linear(tau, y)
        return self.split.inverse(tau, back) if self.split is not None else back

    __call__ = conjugacy


def build_conjugacy(q: QuadraticLyapunov, df: DecoupledFlows, split: Optional[SplitMap] = None,
                    root_tol: Optional[float] = None) -> ConjugacyMap:
    guard = monotone_guard(q.cert, df.flow.perturbation.delta_f, q.eta)
    if not guard.passed and not df.flow.perturbation.is_zero:
        raise GateError(guard.name, f"margin {guard.worst_margin:.6g}", details={"ref": guard.ref})
    stable = CrossingSolver(q, df, STABLE, root_tol) if q.fam.stable_rank else None
    unstable = CrossingSolver(q, df, UNSTABLE, root_tol) if q.fam.unstable_rank and q.cert.has_unstable else None
    return ConjugacyMap(stable, unstable, split)


def full_conjugacy(cmap: ConjugacyMap, tau: float, x) -> np.ndarray:
    return cmap.conjugacy(tau, x)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

def rate_diagnostics(q: QuadraticLyapunov, flow: PerturbedFlow, ts) -> Dict[str, list]:
    """𝔘, 𝔙 on a grid and the antiderivative 𝔚 = −(2η/D²)∫𝔘, normalised to 0 at the first node."""
    ts = np.asarray(ts, dtype=float)
    rate, cert = q.rate, q.cert
    lam_u = cert.lambda_u if cert.lambda_u is not None else 0.0
    g = rate.log_rate(ts)
    norms = np.array([float(spectral_norm(q.S(t))) for t in ts])
    damp = np.maximum(rate.nonuniform_factor(ts, cert.nu), rate.nonuniform_factor(ts, cert.omega))
    u_rate = (g + (lam_u * g - phi(flow.perturbation, rate, ts)) * norms) / damp
    v_rate = (g + lam_u * g * norms) / damp
    w = -2.0 * q.eta / cert.D ** 2 * cumulative_simpson(u_rate, x=ts, initial=0)
    return {"t": ts.tolist(), "U": u_rate.tolist(), "V": v_rate.tolist(), "W": w.tolist()}


def _sample_side(cmap: ConjugacyMap, side: str, tau: float, rng: np.random.Generator, radius: float) -> np.ndarray:
    proj = cmap.sides[side].projector(tau)
    while True:
        x = proj @ rng.uniform(-radius, radius, cmap.n)
        if np.linalg.norm(x) > 1e-3:
            return x


def verify_equivariance(cmap: ConjugacyMap, side: str, samples, tol: float, transport_tol: float = 1e-8) -> StageReport:
    """
    𝔉(t, x_s(t,τ,x0)) = Ψ_s(t,τ)𝔉(τ,x0), 𝔏(t, Ψ_s(t,τ)x0) = x_s(t,τ,𝔏(τ,x0)),
    transport of ℓ and κ along their trajectories and monotonicity of V on the way to the section.
    """
    cs = cmap.sides[side]
    ev = cmap.ev
    rows = {k: [] for k in ("to", "from", "ell", "kappa", "mono")}
    wits: List[dict] = []
    defects, trace = [], []
    for tau, t, x0 in samples:
        tau, t = float(tau), float(t)
        x0 = np.asarray(x0, dtype=float)
        path = cs.nonlinear(tau, x0)
        ell = cs.crossing(tau, path)
        x_t = cs.projector(t) @ path(t)
        lhs = cmap.to_linear_side(side, t, x_t)
        rhs = ev.transition(t, tau) @ cmap.to_linear_side(side, tau, x0)
        d_to = float(np.linalg.norm(lhs - rhs))

        lin_t = cs.projector(t) @ (ev.transition(t, tau) @ x0)
        back = cmap.from_linear_side(side, tau, x0)
        d_from = float(np.linalg.norm(cmap.from_linear_side(side, t, lin_t) - cs.nonlinear(tau, back)(t)))

        kappa = cs.crossing(tau, cs.linear(tau, x0))
        rows["to"].append(tol - d_to)
        rows["from"].append(tol - d_from)
        rows["ell"].append(transport_tol - abs(cs.crossing(t, cs.nonlinear(t, x_t)) - ell))
        rows["kappa"].append(transport_tol - abs(cs.crossing(t, cs.linear(t, lin_t)) - kappa))

        grid = np.linspace(min(tau, ell) - 0.5, max(tau, ell) + 0.5, 25)
        values = np.array([cs.q.value(s, path(s)) for s in grid])
        rows["mono"].append(float(np.min(np.diff(values))))
        if not trace:
            trace = [{"t": float(s), "V": float(v), "dV/dt": float(d)}
                     for s, v, d in zip(grid, values, np.gradient(values, grid))]
        defects.append({"tau": tau, "t": t, "defect": max(d_to, d_from)})
        wits.append({"tau": tau, "t": t, "x0": x0.tolist(), "ell": ell, "kappa": kappa})
    checks = [
        margin_check(f"{side} map onto the linear flow is equivariant", f"conjugacy.{side}_to_linear_equivariance",
                     rows["to"], wits),
        margin_check(f"{side} map from the linear flow is equivariant", f"conjugacy.{side}_from_linear_equivariance",
                     rows["from"], wits),
        margin_check("crossing time is constant along nonlinear trajectories", f"conjugacy.{side}_crossing_transport",
                     rows["ell"], wits),
        margin_check("crossing time is constant along linear trajectories", f"conjugacy.{side}_linear_crossing_transport",
                     rows["kappa"], wits),
        margin_check("V increases along the decoupled trajectory", f"conjugacy.{side}_monotone", rows["mono"], wits),
    ]
    return stage_report(f"{side}_equivariance", checks, tables={"defects": defects, "v-trace": trace})


def verify_inverse(cmap: ConjugacyMap, side: str, samples, tol: float, time_tol: float = 1e-8) -> StageReport:
    """Both compositions of the side maps, the crossing-time exchange and the zero rule."""
    cs = cmap.sides[side]
    rows = {k: [] for k in ("lf", "fl", "kappa", "ell")}
    wits = []
    for tau, x0 in samples:
        tau = float(tau)
        x0 = np.asarray(x0, dtype=float)
        forward = cmap.to_linear_side(side, tau, x0)
        backward = cmap.from_linear_side(side, tau, x0)
        rows["lf"].append(tol - float(np.linalg.norm(cmap.from_linear_side(side, tau, forward) - x0)))
        rows["fl"].append(tol - float(np.linalg.norm(cmap.to_linear_side(side, tau, backward) - x0)))
        rows["kappa"].append(time_tol - abs(cs.crossing_time_lin(tau, x0) - cs.crossing_time_nl(tau, backward)))
        rows["ell"].append(time_tol - abs(cs.crossing_time_nl(tau, x0) - cs.crossing_time_lin(tau, forward)))
        wits.append({"tau": tau, "x0": x0.tolist()})
    taus = sorted({float(tau) for tau, _ in samples})[:3]
    zero = [tol - float(np.linalg.norm(cmap.to_linear_side(side, tau, np.zeros(cmap.n)))
                        + np.linalg.norm(cmap.from_linear_side(side, tau, np.zeros(cmap.n)))) for tau in taus]
    checks = [
        margin_check("inverse after forward", f"conjugacy.{side}_left_inverse", rows["lf"], wits),
        margin_check("forward after inverse", f"conjugacy.{side}_right_inverse", rows["fl"], wits),
        margin_check("linear crossing of x0 is the nonlinear crossing of its preimage",
                     f"conjugacy.{side}_crossing_exchange", rows["kappa"], wits),
        margin_check("nonlinear crossing of x0 is the linear crossing of its image",
                     f"conjugacy.{side}_crossing_exchange_inverse", rows["ell"], wits),
        margin_check("zero maps to zero", f"conjugacy.{side}_zero", zero),
    ]
    return stage_report(f"{side}_inverse", checks)


def check_continuity(cmap: ConjugacyMap, side: str, strict: StrictCertificate, growth: GrowthCertificate,
                     delta_f: float, taus, rng: np.random.Generator, per_tau: int = 4) -> StageReport:
    """Small inputs cross before τ and both side maps stay under their envelopes at the origin."""
    cs = cmap.sides[side]
    rate = cs.q.rate
    rows = {k: [] for k in ("before", "to", "from")}
    wits = []
    records = []
    for tau in taus:
        tau = float(tau)
        reach = math.exp(-strict.epsilon * abs(float(rate.log_value(tau)))) / strict.C
        for _ in range(per_tau):
            x0 = _sample_side(cmap, side, tau, rng, 1.0)
            x0 *= rng.uniform(0.05, 0.9) * reach / float(np.linalg.norm(x0))
            ell = cs.crossing_time_nl(tau, x0)
            kappa = cs.crossing_time_lin(tau, x0)
            records.append((tau, x0, ell, kappa))
            rows["before"].append(tau - max(ell, kappa))
            wits.append({"tau": tau, "x0": x0.tolist(), "ell": ell, "kappa": kappa})
    if not records:
        return stage_report(f"{side}_continuity", [])
    b = max(math.exp(strict.epsilon * abs(float(rate.log_value(ell)))) for _, _, ell, _ in records)
    b_tilde = max(math.exp(strict.epsilon * abs(float(rate.log_value(k)))) for _, _, _, k in records)
    for tau, x0, ell, kappa in records:
        log_tau = abs(float(rate.log_value(tau)))
        head = math.log(strict.C) + strict.epsilon * log_tau
        inner = math.log(strict.C * growth.D * np.linalg.norm(x0)) + growth.theta * log_tau
        to_env = head - strict.beta / (growth.lambda_max + delta_f * growth.D) * (math.log(b) + inner)
        from_env = head - strict.beta / growth.lambda_max * (math.log(b_tilde) + inner)
        rows["to"].append(to_env - math.log(max(np.linalg.norm(cmap.to_linear_side(side, tau, x0)), 1e-300)))
        rows["from"].append(from_env - math.log(max(np.linalg.norm(cmap.from_linear_side(side, tau, x0)), 1e-300)))
    checks = [
        margin_check("small inputs cross before tau", f"conjugacy.{side}_early_crossing", rows["before"], wits),
        margin_check("envelope of the map onto the linear flow", f"conjugacy.{side}_to_linear_envelope", rows["to"], wits),
        margin_check("envelope of the map from the linear flow", f"conjugacy.{side}_from_linear_envelope",
                     rows["from"], wits),
    ]
    return stage_report(f"{side}_continuity", checks, data={"B": b, "B_tilde": b_tilde})


def check_end_to_end(cmap: ConjugacyMap, flow: PerturbedFlow, samples, tol: float) -> StageReport:
    """𝔊(t, x(t,τ,x)) = Ψ(t,τ)𝔊(τ,x) on (τ, t, x) samples."""
    margins, wits, defects = [], [], []
    for tau, t, x in samples:
        tau, t = float(tau), float(t)
        x = np.asarray(x, dtype=float)
        lhs = cmap.conjugacy(t, flow.flow(t, tau, x))
        rhs = cmap.ev.transition(t, tau) @ cmap.conjugacy(tau, x)
        d = float(np.linalg.norm(lhs - rhs))
        margins.append(tol - d)
        defects.append({"tau": tau, "t": t, "defect": d})
        wits.append({"tau": tau, "t": t, "x": x.tolist()})
    origin = [tol - float(np.linalg.norm(cmap.conjugacy(float(tau), np.zeros(cmap.n)))) for tau, _, _ in samples[:3]]
    checks = [
        margin_check("conjugacy maps trajectories onto linear trajectories", "conjugacy.end_to_end", margins, wits),
        margin_check("origin is fixed", "conjugacy.zero", origin),
    ]
    report = stage_report("end_to_end", checks, tables={"defects": defects})
    logger.info(f"End-to-end conjugacy: {report.message}")
    return report


def check_homeomorphism(cmap: ConjugacyMap, tau: float, radius: float, points: int, tol: float,
                        rng: Optional[np.random.Generator] = None) -> StageReport:
    """Injectivity of 𝔊(τ,·) on a mesh of the box and return of the mesh through the inverse pipeline."""
    axis = np.linspace(-radius, radius, points)
    if cmap.n <= 3:
        mesh = np.array(list(itertools.product(axis, repeat=cmap.n)))
    else:
        rng = rng or np.random.default_rng(0)
        mesh = rng.uniform(-radius, radius, (points ** 2, cmap.n))
    step = float(axis[1] - axis[0])
    images = np.array([cmap.conjugacy(tau, x) for x in mesh])
    separation, pairs = [], []
    for i, j in itertools.combinations(range(len(mesh)), 2):
        if np.linalg.norm(mesh[i] - mesh[j]) >= step * (1 - 1e-12):
            separation.append(float(np.linalg.norm(images[i] - images[j])) - 1e-9)
            pairs.append({"tau": tau, "x": mesh[i].tolist(), "x_tilde": mesh[j].tolist()})
    back = [tol - float(np.linalg.norm(cmap.inverse_conjugacy(tau, y) - x)) for x, y in zip(mesh, images)]
    wits = [{"x": x.tolist()} for x in mesh]
    checks = [
        margin_check("distinct mesh points have distinct images", "conjugacy.injective", separation, pairs),
        margin_check("inverse pipeline returns the mesh", "conjugacy.inverse_pipeline", back, wits),
    ]
    return stage_report("homeomorphism", checks, data={"tau": tau, "mesh_points": len(mesh)})
