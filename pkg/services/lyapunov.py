"""
Lyapunov functions of the linear part.

* ``StrictLyapunov``: V = −V_s + V_u from weighted sup formulas along the flow.
* ``QuadraticLyapunov``: S(t) = S_s(t) + S_u(t) from weighted improper integrals,
  U = ⟨S(t)x, x⟩ and V = −sign(U)√|U|, with lattice caching and cubic Hermite
  interpolation between lattice nodes.

Both expose ``value(t, x)`` so the checks below accept either.
"""
import logging
import math
import threading
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.integrate import quad_vec
from scipy.interpolate import CubicHermiteSpline
from scipy.linalg import expm, orth

from core.config import settings
from core.exceptions import CertificateError, ConvergenceError, NotApplicableError
from core.response import CheckResult, StageReport, margin_check, stage_report
from models.growth import GrowthRate
from schemas.certificate import DichotomyCertificate, LocalBound, StrictCertificate
from schemas.settings import LyapunovSettings
from services.growth import horizon
from services.linflow import ProjectionFamily, TransitionEvaluator, spectral_norm, verify_dichotomy

logger = logging.getLogger(__name__)


def _basis(p: np.ndarray) -> np.ndarray:
    """Orthonormal basis of range(p) as columns."""
    if not np.any(p):
        return np.zeros((p.shape[0], 0))
    return orth(p, rcond=1e-8)


# ---------------------------------------------------------------------------
# Strict Lyapunov function from sup formulas
# ---------------------------------------------------------------------------

class StrictLyapunov:
    def __init__(
        self,
        ev: TransitionEvaluator,
        fam: ProjectionFamily,
        rate: GrowthRate,
        cert: DichotomyCertificate,
        T_sup: Optional[float] = None,
        sup_tol: Optional[float] = None,
        base_points: int = 121,
        max_refine: int = 6
    ):
        self.ev, self.fam, self.rate, self.cert = ev, fam, rate, cert
        self.T_sup = settings.T_SUP if T_sup is None else T_sup
        self.sup_tol = settings.SUP_TOL if sup_tol is None else sup_tol
        self.base_points = base_points
        self.max_refine = max_refine

    def _sup(self, t: float, x: np.ndarray, direction: int, lam: float, side: str) -> float:
        """sup over κ of ‖P(κ)Ψ(κ,t)x‖ μ-weighted; P(κ) is re-applied at every κ."""
        if not np.any(x):
            return 0.0
        m, previous = self.base_points, None
        for _ in range(self.max_refine + 1):
            ks = t + direction * np.linspace(0.0, self.T_sup, m)
            norms = np.linalg.norm(self.fam.transport(ks, t, side) @ x, axis=1)
            value = float(np.max(norms * self.rate.ratio_power(ks, t, -lam)))
            if previous is not None and abs(value - previous) < self.sup_tol * max(1.0, value):
                return value
            previous, m = value, 2 * m - 1
        logger.debug(f"Sup at t={t:g} stopped refining at {m} points")
        return value

    def V_s(self, t: float, x) -> float:
        """Stable sup of x; only the π(t)x part contributes."""
        return self._sup(float(t), np.asarray(x, dtype=float), 1, self.cert.lambda_s, "stable")

    def V_u(self, t: float, x) -> float:
        if self.cert.lambda_u is None:
            return 0.0
        return self._sup(float(t), np.asarray(x, dtype=float), -1, self.cert.lambda_u, "unstable")

    def value(self, t: float, x) -> float:
        x = np.asarray(x, dtype=float)
        return -self.V_s(t, x) + self.V_u(t, x)

    def strictness_constants(self, tau: float) -> Tuple[float, Optional[float]]:
        """(C_s(τ), C_u(τ)) of the sup construction; unstable terms drop out without λ_u."""
        ls, lu = self.cert.lambda_s, self.cert.lambda_u
        back = float(self.rate.ratio_power(tau - 1.0, tau, 1.0))
        ahead = float(self.rate.ratio_power(tau + 1.0, tau, 1.0))
        c_s = [1.0 - ahead ** ls]
        c_u = [back ** ls - 1.0]
        if lu is not None:
            c_s.append(ahead ** lu - 1.0)
            c_u.append(1.0 - back ** lu)
        return min(c_s), (min(c_u) if lu is not None else None)

    def certificate(self, taus) -> Tuple[StrictCertificate, Dict[str, list]]:
        """C = max(2D, 1/C_s, 1/C_u) over the sampled τ, ε = max(ν, ω), α = −λ_u, β = λ_s."""
        per_tau = [self.strictness_constants(t) for t in taus]
        c_values = [2.0 * self.cert.D] + [1.0 / cs for cs, _ in per_tau]
        c_values += [1.0 / cu for _, cu in per_tau if cu is not None]
        alpha = -self.cert.lambda_u if self.cert.lambda_u is not None else -abs(self.cert.lambda_s)
        strict = StrictCertificate(
            C=max(c_values), epsilon=max(self.cert.nu, self.cert.omega), alpha=alpha, beta=self.cert.lambda_s
        )
        return strict, {"tau": [float(t) for t in taus], "C_s": [cs for cs, _ in per_tau], "C_u": [cu for _, cu in per_tau]}


def strict_V(ev, fam, cert: DichotomyCertificate, rate: GrowthRate, t: float, x, T_sup: Optional[float] = None) -> float:
    return StrictLyapunov(ev, fam, rate, cert, T_sup=T_sup).value(t, x)


# ---------------------------------------------------------------------------
# Quadratic Lyapunov function
# ---------------------------------------------------------------------------

class QuadraticLyapunov:
    def __init__(
        self,
        ev: TransitionEvaluator,
        fam: ProjectionFamily,
        rate: GrowthRate,
        cert: DichotomyCertificate,
        config: Optional[LyapunovSettings] = None,
        local_bound: Optional[LocalBound] = None
    ):
        config = config or LyapunovSettings()
        eta = config.eta
        upper = -cert.lambda_s if cert.lambda_u is None else min(-cert.lambda_s, cert.lambda_u)
        if not 0 < eta < upper:
            raise CertificateError(f"eta must lie in (0, {upper:g}), got {eta:g}", field="lyapunov.eta")
        self.ev, self.fam, self.rate, self.cert = ev, fam, rate, cert
        self.eta = eta
        self.config = config
        self.local_bound = local_bound
        self.n = ev.n
        self._lock = threading.Lock()
        self._exact: Dict[float, Tuple[np.ndarray, np.ndarray]] = {}
        self._splines: Dict[int, CubicHermiteSpline] = {}
        self.horizons: Dict[float, Tuple[float, float]] = {}

    # -- quadrature ----------------------------------------------------------
    def _tail_target(self, t: float, extra: float) -> float:
        d2m = self.cert.D ** 2 * math.exp(2.0 * extra * abs(float(self.rate.log_value(t))))
        return math.log(d2m / (2.0 * self.eta * self.config.quad_tol)) / (2.0 * self.eta)

    def _propagator(self, t: float, span: float, direction: int):
        """u ↦ Ψ(t + direction·u, t) on [0, span]."""
        if self.ev.system.is_constant:
            a = self.ev.system.constant * direction
            return lambda u: expm(a * u)
        traj = self.ev.dense(t, np.eye(self.n).ravel())
        traj.extend(t + direction * span)
        return lambda u: traj(t + direction * u).reshape(self.n, self.n)

    def _integral(self, t: float, direction: int) -> Tuple[np.ndarray, float]:
        if direction == 1:
            proj, extra = self.fam.projection(t), self.cert.nu
            expo = -2.0 * (self.cert.lambda_s + self.eta)
        else:
            proj, extra = self.fam.complement(t), self.cert.omega
            expo = 2.0 * (self.cert.lambda_u - self.eta)
        span = horizon(self.rate, t, self._tail_target(t, extra), self.config.T_cut, direction)
        psi = self._propagator(t, span, direction)
        log_t = float(self.rate.log_value(t))

        def integrand(u):
            k = t + direction * u
            b = psi(u) @ proj
            w = math.exp(expo * direction * (float(self.rate.log_value(k)) - log_t)) * float(self.rate.log_rate(k))
            return (b.T @ b) * w

        value, err = quad_vec(integrand, 0.0, span, epsabs=self.config.quad_tol, epsrel=1e-10, norm="max", limit=2000)
        if err > 10 * self.config.quad_tol * max(1.0, float(np.max(np.abs(value)))):
            raise ConvergenceError(
                f"quadrature of S at t={t:g} did not converge (error estimate {err:.3g})",
                details={"t": t, "side": "stable" if direction == 1 else "unstable"}
            )
        return value, span

    def parts(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """(S_s(t), S_u(t)) by quadrature, memoized per t."""
        t = float(t)
        with self._lock:
            cached = self._exact.get(t)
        if cached is not None:
            return cached
        zero = np.zeros((self.n, self.n))
        s_s, span_s = (self._integral(t, 1) if self.fam.stable_rank else (zero, 0.0))
        if self.fam.unstable_rank and self.cert.lambda_u is not None:
            s_u, span_u = self._integral(t, -1)
            s_u = -s_u
        else:
            s_u, span_u = zero, 0.0
        s_s, s_u = 0.5 * (s_s + s_s.T), 0.5 * (s_u + s_u.T)
        with self._lock:
            self._exact[t] = (s_s, s_u)
            self.horizons[t] = (span_s, span_u)
        logger.debug(f"S({t:g}) assembled with horizons {span_s:.3g}/{span_u:.3g}")
        return s_s, s_u

    def S_exact(self, t: float) -> np.ndarray:
        s_s, s_u = self.parts(t)
        return s_s + s_u

    def dS_exact(self, t: float) -> np.ndarray:
        """S' from the matrix identity satisfied by both integrals."""
        s_s, s_u = self.parts(t)
        a = self.ev.system.matrix(t)
        p = self.fam.projection(t)
        q = self.fam.complement(t)
        g = float(self.rate.log_rate(t))
        lam_u = self.cert.lambda_u if self.cert.lambda_u is not None else 0.0
        s = s_s + s_u
        return (-a.T @ s - s @ a - g * (p.T @ p + q.T @ q)
                + 2.0 * g * ((self.cert.lambda_s + self.eta) * s_s + (lam_u - self.eta) * s_u))

    # -- lattice interpolation -----------------------------------------------
    def S(self, t: float) -> np.ndarray:
        t = float(t)
        step = self.config.lattice_step
        k = math.floor(t / step)
        if k * step == t:
            return self.S_exact(t)
        with self._lock:
            spline = self._splines.get(k)
        if spline is None:
            nodes = [k * step, (k + 1) * step]
            values = np.stack([self.S_exact(x) for x in nodes])
            slopes = np.stack([self.dS_exact(x) for x in nodes])
            spline = CubicHermiteSpline(nodes, values, slopes, axis=0)
            with self._lock:
                self._splines[k] = spline
        return spline(t)

    def U(self, t: float, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.S(t) @ x)

    def value(self, t: float, x) -> float:
        return eval_UV(self, t, x)[1]

    # -- constants -------------------------------------------------------------
    def strictness_constants(self, tau: float) -> Tuple[float, Optional[float]]:
        """Closed-form (C_s(τ), C_u(τ)) from the local bound (D̃, c, λ̃)."""
        if self.local_bound is None:
            raise NotApplicableError("strictness constants need a local bound (D_tilde, c, lambda_tilde)")
        lb, r, tau = self.local_bound, self.rate, float(tau)
        ls, lu, eta = self.cert.lambda_s, self.cert.lambda_u, self.eta

        def log_ratio(a, b):
            return float(r.log_value(a) - r.log_value(b))

        c_s = [(float(r.ratio_power(tau, tau - 1, -2 * (ls + eta))) - 1) * log_ratio(tau + lb.c, tau)]
        c_u = [(1 - float(r.ratio_power(tau + 1, tau, 2 * (ls + eta)))) * log_ratio(tau + 1 + lb.c, tau + 1)]
        if lu is not None:
            c_s.append((1 - float(r.ratio_power(tau - 1, tau, 2 * (lu - eta)))) * log_ratio(tau - 1, tau - 1 - lb.c))
            c_u.append((float(r.ratio_power(tau + 1, tau, 2 * (lu - eta))) - 1) * log_ratio(tau, tau - lb.c))
        scale = 1.0 / lb.D_tilde ** 2
        return scale * min(c_s), (scale * min(c_u) if lu is not None else None)

    def measured_strictness_constants(self, taus) -> Tuple[float, Optional[float]]:
        """Smallest 4·Rayleigh quotient·μ(|τ|)^{2λ̃} of S on E^s (and of −S on E^u)."""
        lam_tilde = self.local_bound.lambda_tilde if self.local_bound else 0.0
        c_s, c_u = [], []
        for tau in taus:
            s = self.S_exact(tau)
            weight = 4.0 * math.exp(2.0 * lam_tilde * float(self.rate.log_value(abs(tau))))
            bs, bu = _basis(self.fam.projection(tau)), _basis(self.fam.complement(tau))
            if bs.shape[1]:
                c_s.append(weight * float(np.linalg.eigvalsh(bs.T @ s @ bs).min()))
            if bu.shape[1]:
                c_u.append(weight * float(np.linalg.eigvalsh(-bu.T @ s @ bu).min()))
        return (min(c_s) if c_s else float("inf")), (min(c_u) if c_u else None)

    def strict_certificate(self, c_s: float, c_u: Optional[float]) -> StrictCertificate:
        """(C, ε, α, β) of V = −sign(U)√|U| given the strictness constants."""
        lam_tilde = self.local_bound.lambda_tilde if self.local_bound else 0.0
        candidates = [self.cert.D / math.sqrt(self.eta), 2.0 / math.sqrt(c_s)]
        if c_u is not None:
            candidates.append(2.0 / math.sqrt(c_u))
        lam_u = self.cert.lambda_u
        return StrictCertificate(
            C=max(candidates),
            epsilon=max(max(self.cert.nu, self.cert.omega) / 2.0, lam_tilde),
            alpha=-(lam_u - self.eta) if lam_u is not None else -self.eta,
            beta=self.cert.lambda_s + self.eta
        )


def build_S(ev, fam, cert: DichotomyCertificate, rate: GrowthRate, eta: float = 0.5,
            config: Optional[LyapunovSettings] = None, local_bound: Optional[LocalBound] = None) -> QuadraticLyapunov:
    config = (config or LyapunovSettings()).model_copy(update={"eta": eta})
    return QuadraticLyapunov(ev, fam, rate, cert, config, local_bound)


def eval_UV(q: QuadraticLyapunov, t: float, x) -> Tuple[float, float]:
    u = q.U(t, x)
    return u, -math.copysign(1.0, u) * math.sqrt(abs(u)) if u != 0 else 0.0


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------

def _psd_margin(m: np.ndarray, scale: float) -> float:
    """Margin of m ≤ 0: minus the largest eigenvalue of its symmetric part, relative to scale."""
    sym = 0.5 * (m + m.T)
    return -float(np.linalg.eigvalsh(sym).max()) / max(1.0, scale)


def check_S_properties(q: QuadraticLyapunov, ts, h: float = 1e-4, tol: float = 1e-7) -> StageReport:
    """Symmetry, invertibility, norm bound, both differential inequalities, lower bounds and signature."""
    cert, rate, n = q.cert, q.rate, q.n
    lam_u = cert.lambda_u
    rows = {k: [] for k in ("sym", "inv", "norm", "printed", "derived", "identity", "sig", "lower_s", "lower_u")}
    witnesses = []
    for t in ts:
        t = float(t)
        s_s, s_u = q.parts(t)
        s = s_s + s_u
        mat = q.ev.system.matrix(t)
        g = float(rate.log_rate(t))
        log_mu = abs(float(rate.log_value(t)))
        witnesses.append({"t": t})

        rows["sym"].append(1e-10 - float(spectral_norm(s - s.T)))
        eig = np.linalg.eigvalsh(s)
        rows["inv"].append(float(np.abs(eig).min()) - 1e-8)
        bound = cert.D ** 2 / q.eta * math.exp(max(cert.nu, cert.omega) * log_mu)
        rows["norm"].append(math.log(bound) - math.log(float(spectral_norm(s))))
        rows["sig"].append(0.0 if (int(np.sum(eig > 0)), int(np.sum(eig < 0))) == (q.fam.stable_rank, q.fam.unstable_rank) else -1.0)

        fd = (q.S_exact(t + h) - q.S_exact(t - h)) / (2 * h)
        lhs = fd + mat.T @ s + s @ mat
        scale = g * (1.0 + float(spectral_norm(s)))
        printed_rhs = -2.0 * g * (np.eye(n) + (lam_u or 0.0) * s)
        rows["printed"].append(_psd_margin(lhs - printed_rhs, scale))
        coef = (lam_u - q.eta) if lam_u is not None else (cert.lambda_s + q.eta)
        derived_rhs = -g * np.eye(n) + 2.0 * coef * g * s
        rows["derived"].append(_psd_margin(lhs - derived_rhs, scale))
        exact = q.dS_exact(t)
        rows["identity"].append(1e-4 - float(spectral_norm(fd - exact)) / max(1.0, float(spectral_norm(exact))))

        if q.local_bound is not None:
            c_s, c_u = q.strictness_constants(t)
            weight = math.exp(-2.0 * q.local_bound.lambda_tilde * float(rate.log_value(abs(t))))
            bs, bu = _basis(q.fam.projection(t)), _basis(q.fam.complement(t))
            if bs.shape[1]:
                rows["lower_s"].append(float(np.linalg.eigvalsh(bs.T @ s @ bs).min()) - c_s / 4 * weight)
            if bu.shape[1] and c_u is not None:
                rows["lower_u"].append(float(np.linalg.eigvalsh(-bu.T @ s @ bu).min()) - c_u / 4 * weight)

    checks = [
        margin_check("S symmetric", "quadratic.symmetric", rows["sym"], witnesses),
        margin_check("S invertible", "quadratic.invertible", rows["inv"], witnesses),
        margin_check("S norm bound", "quadratic.norm_bound", rows["norm"], witnesses, tol=1e-9),
        margin_check("S signature matches splitting", "quadratic.cone_dimensions", rows["sig"], witnesses),
        margin_check("differential inequality (as printed)", "quadratic.derivative_bound_as_printed",
                     rows["printed"], witnesses, tol=tol, gating=False,
                     detail="reported only; the constants of this form do not hold in general"),
        margin_check("differential inequality (as derived)", "quadratic.derivative_bound_as_derived",
                     rows["derived"], witnesses, tol=tol),
        margin_check("derivative identity", "quadratic.derivative_identity", rows["identity"], witnesses),
    ]
    if q.local_bound is not None:
        checks.append(margin_check("lower bound on E^s", "quadratic.lower_bound_stable", rows["lower_s"], witnesses, tol=1e-9))
        checks.append(margin_check("lower bound on E^u", "quadratic.lower_bound_unstable", rows["lower_u"], witnesses, tol=1e-9))
    report = stage_report("quadratic_lyapunov", checks, data={"eta": q.eta})
    logger.info(f"S(t) properties: {report.message}")
    return report


def check_monotonicity(V, ev: TransitionEvaluator, tau: float, x, offsets, q: Optional[QuadraticLyapunov] = None,
                       h: float = 1e-4, tol: float = 1e-9) -> StageReport:
    """Non-decrease of V along Ψ(t,τ)x; with q, also the derivative identity of U along the flow."""
    x = np.asarray(x, dtype=float)
    offsets = np.sort(np.asarray(offsets, dtype=float))
    ts = tau + offsets[offsets >= 0]
    states = ev.transition_fan(tau, ts) @ x
    values = [V.value(t, y) for t, y in zip(ts, states)]
    steps = [(b - a) / max(1.0, abs(a)) for a, b in zip(values[:-1], values[1:])]
    witnesses = [{"tau": float(tau), "t": float(t), "x": x.tolist()} for t in ts[1:]]
    checks = [margin_check("V non-decreasing along linear flow", "lyapunov.monotone", steps, witnesses, tol=tol)]

    if q is not None:
        cert = q.cert
        lam_u = cert.lambda_u if cert.lambda_u is not None else 0.0
        ident = []
        shifts = []
        u_tau = float(x @ q.S_exact(tau) @ x)
        for t, y in zip(ts, states):
            fwd, bwd = ev.transition(t + h, tau) @ x, ev.transition(t - h, tau) @ x
            fd = (fwd @ q.S_exact(t + h) @ fwd - bwd @ q.S_exact(t - h) @ bwd) / (2 * h)
            s_s, s_u = q.parts(t)
            p = q.fam.projection(t)
            ys, yu = p @ y, q.fam.complement(t) @ y
            g = float(q.rate.log_rate(t))
            exact = -g * (ys @ ys + yu @ yu) + 2 * g * ((cert.lambda_s + q.eta) * (y @ s_s @ y) + (lam_u - q.eta) * (y @ s_u @ y))
            ident.append(1e-4 * max(1.0, abs(exact)) - abs(fd - exact))
            shifts.append((u_tau - float(y @ q.S_exact(t) @ y)) / max(1.0, abs(u_tau)))
        wit = [{"tau": float(tau), "t": float(t)} for t in ts]
        checks.append(margin_check("dU/dt identity along linear flow", "quadratic.flow_identity", ident, wit))
        checks.append(margin_check("U non-increasing along linear flow", "quadratic.integral_shift", shifts, wit, tol=tol))
    return stage_report("monotonicity", checks, tables={"v-trace": _v_trace(ts, values)})


def _v_trace(ts, values):
    ts, values = np.asarray(ts, dtype=float), np.asarray(values, dtype=float)
    slope = np.gradient(values, ts) if ts.size > 1 else np.zeros_like(ts)
    return [{"t": float(t), "V": float(v), "dV/dt": float(d)} for t, v, d in zip(ts, values, slope)]


def check_strictness(V, cert: StrictCertificate, ev: TransitionEvaluator, fam: ProjectionFamily, rate: GrowthRate,
                     taus, rng: np.random.Generator, offsets, per_tau: int = 2, tol: float = 1e-9) -> StageReport:
    """Growth on E^u, decay on E^s and the norm lower bound, with log margins."""
    offsets = np.asarray([o for o in offsets if o >= 0], dtype=float)
    unstable, stable, lower, upper = [], [], [], []
    w_u, w_s, w_l, w_g = [], [], [], []
    for tau in taus:
        tau = float(tau)
        log_tau = float(rate.log_value(tau))
        for side, basis in (("stable", _basis(fam.projection(tau))), ("unstable", _basis(fam.complement(tau)))):
            for _ in range(per_tau if basis.shape[1] else 0):
                x = basis @ rng.normal(size=basis.shape[1])
                v0 = V.value(tau, x)
                if v0 == 0.0:
                    continue
                lower.append(math.log(abs(v0)) + cert.epsilon * abs(log_tau) + math.log(cert.C) - math.log(np.linalg.norm(x)))
                w_l.append({"tau": tau, "x": x.tolist(), "side": side})
                ts = tau + offsets
                for t, y in zip(ts, ev.transition_fan(tau, ts) @ x):
                    vt = V.value(t, y)
                    spread = float(rate.log_value(t)) - log_tau
                    wit = {"tau": tau, "t": float(t), "x": x.tolist()}
                    if side == "unstable":
                        unstable.append((math.log(vt) if vt > 0 else -math.inf) - (-cert.alpha * spread + math.log(v0)) if v0 > 0 else -math.inf)
                        w_u.append(wit)
                    else:
                        stable.append(cert.beta * spread + math.log(abs(v0)) - (math.log(abs(vt)) if vt != 0 else -math.inf))
                        w_s.append(wit)
        z = rng.normal(size=ev.n)
        vz = V.value(tau, z)
        if vz != 0.0:
            upper.append(math.log(cert.C) + cert.epsilon * abs(log_tau) + math.log(np.linalg.norm(z)) - math.log(abs(vz)))
            w_g.append({"tau": tau, "x": z.tolist()})
    checks = [
        margin_check("growth on unstable cone", "strict.unstable_growth", unstable, w_u, tol=tol),
        margin_check("decay on stable cone", "strict.stable_decay", stable, w_s, tol=tol),
        margin_check("norm lower bound", "strict.lower_bound", lower, w_l, tol=tol),
        margin_check("norm upper bound", "strict.upper_bound", upper, w_g, tol=tol),
    ]
    report = stage_report("strictness", checks, data={"certificate": cert.model_dump()})
    logger.info(f"Strictness {cert.model_dump()}: {report.message}")
    return report


def recover_dichotomy(
    strict: StrictCertificate,
    c_s: float,
    c_u: Optional[float],
    lambda_tilde: float,
    ev: TransitionEvaluator,
    fam: ProjectionFamily,
    rate: GrowthRate,
    grid
) -> Tuple[Optional[DichotomyCertificate], StageReport]:
    """Dichotomy constants from strict Lyapunov data, cross-validated on the grid."""
    quarter = max(c_s / 4.0, (c_u or 0.0) / 4.0)
    b = math.sqrt(2.0) / quarter
    values = {
        "D": max(1.0, math.sqrt(2.0) * b * strict.C ** 2),
        "lambda_s": strict.beta + strict.epsilon,
        "lambda_u": (-strict.alpha - strict.epsilon) if fam.unstable_rank else None,
        "nu": 2.0 * (strict.epsilon + lambda_tilde),
        "omega": 2.0 * (strict.epsilon + lambda_tilde),
    }
    try:
        recovered = DichotomyCertificate(**values)
    except ValueError as e:
        check = CheckResult(name="recovered constants form a dichotomy", ref="lyapunov.recovery_side_conditions",
                            passed=False, samples=1, witness={"values": values}, detail=str(e).splitlines()[0])
        return None, stage_report("recovery", [check], data={"values": values, "B": b})
    cross = verify_dichotomy(ev, fam, rate, recovered, grid)
    checks = [CheckResult(name="recovered constants form a dichotomy", ref="lyapunov.recovery_side_conditions",
                          passed=True, samples=1)] + cross.checks
    report = stage_report("recovery", checks, data={"certificate": recovered.model_dump(), "B": b})
    logger.info(f"Recovered dichotomy {recovered.model_dump()}: {report.message}")
    return recovered, report
