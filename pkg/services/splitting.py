"""
Decoupling homeomorphism 𝔖 built from the invariant foliations, its inverse,
and the decoupled stable/unstable flows it conjugates the system to.
"""
import logging
from typing import Callable, List, Optional

import numpy as np

from core.exceptions import ConvergenceError, GateError, SubspaceError
from core.response import CheckResult, StageReport, margin_check, stage_report
from services.linflow import DenseTrajectory
from services.manifolds import STABLE, UNSTABLE, LyapunovPerronSolver
from services.nonlinear import PerturbedFlow

logger = logging.getLogger(__name__)


def _fixed_point(step: Callable[[np.ndarray], np.ndarray], seed: np.ndarray, tol: float, max_iter: int,
                 label: str) -> np.ndarray:
    z = seed
    for k in range(1, max_iter + 1):
        new = step(z)
        delta = float(np.linalg.norm(new - z))
        z = new
        if delta < tol:
            logger.debug(f"{label} fixed point after {k} iterations")
            return z
    raise ConvergenceError(f"{label} fixed point did not converge (last delta {delta:.3g})",
                           details={"label": label, "delta": delta})


class SplitMap:
    """
    𝔖(t, x) = π(t)P_s + (id − π(t))P_u where P_u is the point of the unstable
    manifold on the stable leaf through x and P_s the point of the stable manifold
    on the unstable leaf through x.  With ``straightened=False`` the leaves are
    cut at ζ = 0 instead, which gives h_s(t,0,x) + h_u(t,0,x).
    """

    def __init__(self, solver: LyapunovPerronSolver, straightened: bool = True, tol: Optional[float] = None,
                 max_iter: Optional[int] = None):
        self.solver = solver
        self.straightened = straightened
        self.tol = 10.0 * solver.config.fp_tol if tol is None else tol
        self.max_iter = solver.config.max_iter if max_iter is None else max_iter
        self.n = solver.n
        self.identity = solver.fam.stable_rank == 0 or solver.fam.unstable_rank == 0

    @property
    def lipschitz(self) -> float:
        return self.solver.lipschitz_budget(STABLE) + self.solver.lipschitz_budget(UNSTABLE)

    def _split(self, t: float):
        return self.solver.fam.projection(t), self.solver.fam.complement(t)

    def forward(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.identity:
            return x.copy()
        s = self.solver
        p, q = self._split(t)
        if not self.straightened:
            return s.h_s(t, np.zeros(self.n), x) + s.h_u(t, np.zeros(self.n), x)
        zeta_s = _fixed_point(lambda z: p @ s.g_u(t, s.h_s(t, z, x)), np.zeros(self.n), self.tol, self.max_iter,
                              "unstable manifold on stable leaf")
        zeta_u = _fixed_point(lambda z: q @ s.g_s(t, s.h_u(t, z, x)), np.zeros(self.n), self.tol, self.max_iter,
                              "stable manifold on unstable leaf")
        return s.h_u(t, zeta_u, x) + s.h_s(t, zeta_s, x)

    def _anchor(self, t: float, y_part: np.ndarray, side: str) -> np.ndarray:
        if not self.straightened:
            return y_part
        g = self.solver.g_s if side == STABLE else self.solver.g_u
        return y_part + g(t, y_part)

    def inverse(self, t: float, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.identity:
            return y.copy()
        s = self.solver
        p, q = self._split(t)
        q_s = self._anchor(t, p @ y, STABLE)
        q_u = self._anchor(t, q @ y, UNSTABLE)
        zeta = _fixed_point(lambda z: p @ s.h_u(t, q @ s.h_s(t, z, q_u), q_s), p @ y, self.tol, self.max_iter,
                            "leaf intersection")
        return zeta + s.h_s(t, zeta, q_u)

    __call__ = forward


def build_split_map(solver: LyapunovPerronSolver, straightened: bool = True) -> SplitMap:
    sm = SplitMap(solver, straightened)
    if not sm.identity and sm.lipschitz >= 1.0:
        raise GateError("Lip(h_s) + Lip(h_u) < 1", f"sum of leaf Lipschitz budgets is {sm.lipschitz:.6g}",
                        details={"ref": "splitting.lipschitz_sum", "margin": 1.0 - sm.lipschitz})
    return sm


class DecoupledFlows:
    """
    x_s' = A(t)x_s + π(t)f(t,x_s) and x_u' = A(t)x_u + (id−π(t))f(t,x_u).

    With a solver the stable (unstable) flow is taken in straightened coordinates:
    lift x0 onto the stable (unstable) manifold, follow the full flow, project back.
    """

    def __init__(self, flow: PerturbedFlow, fam, solver: Optional[LyapunovPerronSolver] = None):
        self.flow = flow
        self.fam = fam
        self.solver = solver
        self.n = flow.n

    def _projector(self, side: str, t: float) -> np.ndarray:
        return self.fam.side(side, t)

    def _require(self, side: str, tau: float, x0: np.ndarray):
        off = x0 - self._projector(side, tau) @ x0
        if np.linalg.norm(off) > 1e-8 * max(1.0, float(np.linalg.norm(x0))):
            raise SubspaceError(f"x0 must lie in the {side} subspace at tau={tau:g}", field="x0")

    def dense(self, side: str, tau: float, x0) -> Callable[[float], np.ndarray]:
        """Trajectory of the chosen subsystem through (tau, x0), evaluable on both sides of tau."""
        tau = float(tau)
        x0 = np.asarray(x0, dtype=float)
        self._require(side, tau, x0)
        if not np.any(x0):
            return lambda t: np.zeros(self.n)
        if self.solver is None or self.flow.perturbation.is_zero:
            a, f = self.flow.evaluator.system.matrix, self.flow.perturbation

            def rhs(s, x):
                return a(s) @ x + self._projector(side, s) @ f(s, x)

            return DenseTrajectory(rhs, tau, x0, self.flow.rtol, self.flow.atol)
        g = self.solver.g_s if side == STABLE else self.solver.g_u
        traj = DenseTrajectory(self.flow.rhs, tau, x0 + g(tau, x0), self.flow.rtol, self.flow.atol)
        return lambda t: self._projector(side, t) @ traj(t)

    def __call__(self, side: str, t: float, tau: float, x0) -> np.ndarray:
        if t == tau:
            x0 = np.asarray(x0, dtype=float)
            self._require(side, float(tau), x0)
            return x0.copy()
        return self.dense(side, tau, x0)(float(t))

    def stable(self, t: float, tau: float, x0) -> np.ndarray:
        return self(STABLE, t, tau, x0)

    def unstable(self, t: float, tau: float, x0) -> np.ndarray:
        return self(UNSTABLE, t, tau, x0)


def decoupled_flow(df: DecoupledFlows, side: str, t: float, tau: float, x0) -> np.ndarray:
    return df(side, t, tau, x0)


def check_subspace_preservation(df: DecoupledFlows, side: str, tau: float, x0, ts, tol: float = 1e-8) -> CheckResult:
    margins, wits = [], []
    path = df.dense(side, tau, x0)
    for t in ts:
        y = path(float(t))
        off = y - df._projector(side, t) @ y
        margins.append(tol * max(1.0, float(np.linalg.norm(y))) - float(np.linalg.norm(off)))
        wits.append({"tau": float(tau), "t": float(t), "side": side})
    return margin_check(f"decoupled {side} flow stays in its subspace", f"splitting.{side}_subspace", margins, wits)


def check_round_trip(sm: SplitMap, samples, tol: float) -> StageReport:
    """𝔖̂∘𝔖 = id, 𝔖∘𝔖̂ = id and 𝔖(t,0) = 0 on (t, x) samples."""
    forward_inv, inv_forward, zero = [], [], []
    wits: List[dict] = []
    for t, x in samples:
        x = np.asarray(x, dtype=float)
        forward_inv.append(tol - float(np.linalg.norm(sm.inverse(t, sm.forward(t, x)) - x)))
        inv_forward.append(tol - float(np.linalg.norm(sm.forward(t, sm.inverse(t, x)) - x)))
        wits.append({"t": float(t), "x": x.tolist()})
    for t in sorted({float(t) for t, _ in samples})[:3]:
        zero.append(tol - float(np.linalg.norm(sm.forward(t, np.zeros(sm.n)))))
    checks = [
        margin_check("inverse after forward", "splitting.left_inverse", forward_inv, wits),
        margin_check("forward after inverse", "splitting.right_inverse", inv_forward, wits),
        margin_check("zero is fixed", "splitting.zero", zero),
    ]
    return stage_report("split_round_trip", checks, data={"lipschitz_sum": sm.lipschitz})


def verify_split_conjugation(sm: SplitMap, df: DecoupledFlows, flow: PerturbedFlow, samples, tol: float,
                             gating: bool = True) -> StageReport:
    """
    𝔖(t, x(t,τ,x)) = N_s(t,τ,π(τ)𝔖(τ,x)) + N_u(t,τ,(id−π(τ))𝔖(τ,x)) and the matching
    identity for 𝔖̂ on (τ, t, x) samples.
    """
    forward, inverse, rows, wits = [], [], [], []
    for tau, t, x in samples:
        tau, t = float(tau), float(t)
        x = np.asarray(x, dtype=float)
        y = sm.forward(tau, x)
        fam = sm.solver.fam
        moved = df.stable(t, tau, fam.projection(tau) @ y) + df.unstable(t, tau, fam.complement(tau) @ y)
        x_t = flow.flow(t, tau, x)
        d_forward = float(np.linalg.norm(sm.forward(t, x_t) - moved))
        d_inverse = float(np.linalg.norm(sm.inverse(t, moved) - x_t)) if sm.straightened else d_forward
        forward.append(tol - d_forward)
        inverse.append(tol - d_inverse)
        rows.append({"tau": tau, "t": t, "defect": max(d_forward, d_inverse)})
        wits.append({"tau": tau, "t": t, "x": x.tolist()})
    checks = [
        margin_check("split map conjugates to the decoupled flows", "splitting.conjugation", forward, wits,
                     gating=gating),
        margin_check("inverse split map conjugates back", "splitting.inverse_conjugation", inverse, wits,
                     gating=gating),
    ]
    data = {"straightened": sm.straightened, "max_defect": max((r["defect"] for r in rows), default=0.0)}
    report = stage_report("split_conjugation", checks, data=data, tables={"defects": rows})
    if not report.success:
        logger.warning(f"Split conjugation defects: {report.message}")
    return report
