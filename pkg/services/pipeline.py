"""
Scenario assembly: every component a command needs is built lazily from one
scenario file, so a command only pays for the stages it actually touches.
"""
import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from core.config import settings
from core.exceptions import ConfigurationError, GateError
from core.response import CheckResult, StageReport, stage_report
from models.growth import GrowthRate
from models.linear import LinearSystem
from models.perturbation import Perturbation
from schemas.certificate import DichotomyCertificate, GrowthCertificate, LocalBound, StrictCertificate
from schemas.scenario import Scenario
from schemas.settings import LPSettings, LyapunovSettings, SampleSettings, Tolerances
from services import growth as growth_service
from services import linflow, nonlinear
from services.conjugacy import ConjugacyMap, build_conjugacy, monotone_guard
from services.linflow import ProjectionFamily, TransitionEvaluator
from services.lyapunov import QuadraticLyapunov, StrictLyapunov
from services.manifolds import STABLE, UNSTABLE, LyapunovPerronSolver, hypothesis_checks
from services.nonlinear import PerturbedFlow
from services.splitting import DecoupledFlows, SplitMap, build_split_map

logger = logging.getLogger(__name__)

SEED_LIMIT = 2 ** 64
STAGE_STREAMS = {
    "validate": 1,
    "dichotomy": 2,
    "lyapunov": 3,
    "manifold": 4,
    "split": 5,
    "conjugate": 6,
}


@dataclass
class ScenarioContext:
    scenario: Scenario
    seed: int
    tol_scale: float = 1.0
    out_dir: Path = field(default_factory=lambda: Path(settings.OUTPUT_DIR))

    # -- settings ---------------------------------------------------------------
    @cached_property
    def factor(self) -> float:
        return self.tol_scale * self.scenario.tol_scale

    @cached_property
    def tolerances(self) -> Tolerances:
        return Tolerances().scaled(self.factor)

    @cached_property
    def lyapunov_settings(self) -> LyapunovSettings:
        return self.scenario.lyapunov.scaled(self.factor)

    @cached_property
    def lp_settings(self) -> LPSettings:
        return self.scenario.lp.scaled(self.factor)

    @property
    def samples(self) -> SampleSettings:
        return self.scenario.samples

    @cached_property
    def grid(self) -> np.ndarray:
        r, step = self.samples.grid_radius, self.samples.grid_step
        return np.linspace(-r, r, int(round(2 * r / step)) + 1)

    # -- systems ----------------------------------------------------------------
    @cached_property
    def rate(self) -> GrowthRate:
        return growth_service.from_config(self.scenario.growth)

    @cached_property
    def system(self) -> LinearSystem:
        return linflow.from_config(self.scenario.linear)

    @property
    def n(self) -> int:
        return self.system.n

    @cached_property
    def ev(self) -> TransitionEvaluator:
        return TransitionEvaluator(self.system, rtol=self.tolerances.rtol, atol=self.tolerances.atol)

    @cached_property
    def fam(self) -> ProjectionFamily:
        return ProjectionFamily(self.ev)

    @cached_property
    def p(self) -> Perturbation:
        return nonlinear.from_config(self.scenario.perturbation, self.n)

    @cached_property
    def pf(self) -> PerturbedFlow:
        return PerturbedFlow(self.ev, self.p)

    # -- certificates -----------------------------------------------------------
    @property
    def dichotomy_source(self) -> str:
        return "scenario" if self.scenario.dichotomy is not None else "fitted"

    @cached_property
    def dichotomy(self) -> DichotomyCertificate:
        if self.scenario.dichotomy is not None:
            return self.scenario.dichotomy
        return linflow.fit_dichotomy_constants(self.ev, self.fam, self.rate, self.grid)

    @cached_property
    def local_bound(self) -> LocalBound:
        if self.scenario.local_bound is not None:
            return self.scenario.local_bound
        given = self.scenario.growth_bound
        if given is not None and given.local is not None:
            return given.local
        return linflow.fit_local_bound(self.ev, self.rate, self.grid)

    @cached_property
    def growth_bound(self) -> GrowthCertificate:
        if self.scenario.growth_bound is not None:
            return self.scenario.growth_bound
        return linflow.fit_growth_constants(self.ev, self.rate, self.grid, local=self.local_bound)

    # -- Lyapunov functions -----------------------------------------------------
    @cached_property
    def quadratic(self) -> QuadraticLyapunov:
        return QuadraticLyapunov(self.ev, self.fam, self.rate, self.dichotomy, self.lyapunov_settings, self.local_bound)

    @cached_property
    def strict(self) -> StrictLyapunov:
        return StrictLyapunov(self.ev, self.fam, self.rate, self.dichotomy, T_sup=self.lyapunov_settings.T_sup)

    @cached_property
    def strictness_taus(self) -> np.ndarray:
        return np.linspace(-self.samples.t_radius, self.samples.t_radius, 11)

    @cached_property
    def quadratic_constants(self) -> Tuple[float, Optional[float]]:
        """Smallest closed-form (C_s, C_u) over the strictness grid."""
        per_tau = [self.quadratic.strictness_constants(t) for t in self.strictness_taus]
        c_s = min(cs for cs, _ in per_tau)
        c_u = min(cu for _, cu in per_tau) if per_tau[0][1] is not None else None
        return c_s, c_u

    @cached_property
    def quadratic_certificate(self) -> StrictCertificate:
        return self.quadratic.strict_certificate(*self.quadratic_constants)

    # -- nonlinear machinery ----------------------------------------------------
    @cached_property
    def solver(self) -> LyapunovPerronSolver:
        return LyapunovPerronSolver(self.ev, self.fam, self.p, self.rate, self.dichotomy, self.lp_settings, flow=self.pf)

    @cached_property
    def split(self) -> SplitMap:
        return build_split_map(self.solver)

    @cached_property
    def decoupled(self) -> DecoupledFlows:
        return DecoupledFlows(self.pf, self.fam, self.solver)

    @cached_property
    def conjugacy(self) -> ConjugacyMap:
        return build_conjugacy(self.quadratic, self.decoupled, self.split, root_tol=self.tolerances.root)

    # -- sampling ---------------------------------------------------------------
    def rng(self, stage: str) -> np.random.Generator:
        """Independent stream per stage so one command's draws never shift another's."""
        return np.random.default_rng([self.seed, STAGE_STREAMS[stage]])

    def taus(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(-self.samples.t_radius, self.samples.t_radius, count)

    def state(self, rng: np.random.Generator, proj: Optional[np.ndarray] = None) -> np.ndarray:
        """A point of the ball ‖x‖ ≤ x_radius, optionally projected first."""
        r = self.samples.x_radius
        x = rng.uniform(-r, r, self.n)
        if proj is not None:
            x = proj @ x
        norm = float(np.linalg.norm(x))
        return x * (r / norm) if norm > r else x

    def side_projector(self, side: str, tau: float) -> np.ndarray:
        return self.fam.projection(tau) if side == STABLE else self.fam.complement(tau)

    def pairs(self, rng: np.random.Generator, count: int, side: Optional[str] = None) -> List[Tuple[float, np.ndarray]]:
        out = []
        while len(out) < count:
            tau = float(rng.uniform(-self.samples.t_radius, self.samples.t_radius))
            x = self.state(rng, self.side_projector(side, tau) if side else None)
            if side is None or np.linalg.norm(x) > 1e-3:
                out.append((tau, x))
        return out

    def triples(self, rng: np.random.Generator, count: int, side: Optional[str] = None):
        """(τ, t, x) with |t − τ| ≤ dt_max."""
        return [(tau, tau + float(rng.uniform(-self.samples.dt_max, self.samples.dt_max)), x)
                for tau, x in self.pairs(rng, count, side)]

    def meta(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario.name,
            "seed": self.seed,
            "tol_scale": self.factor,
            "n": self.n,
            "tolerances": self.tolerances.model_dump(),
        }


def resolve_seed(cli_seed: Optional[int], scenario: Scenario, required: bool) -> int:
    seed = cli_seed if cli_seed is not None else scenario.seed
    if seed is None:
        if required:
            raise ConfigurationError("a seed is mandatory in check mode; pass --seed or set 'seed' in the scenario")
        seed = settings.DEFAULT_SEED
    if not 0 <= seed < SEED_LIMIT:
        raise ConfigurationError(f"seed must be an unsigned 64-bit integer, got {seed}", details={"seed": seed})
    return int(seed)


def load_scenario(
    path: Path,
    seed: Optional[int] = None,
    tol_scale: float = 1.0,
    out: Optional[Path] = None,
    require_seed: bool = False
) -> ScenarioContext:
    """Read and validate a scenario file; schema errors propagate as pydantic ValidationError."""
    path = Path(path)
    try:
        with path.open(encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as e:
        raise ConfigurationError(f"cannot read scenario '{path}': {e.strerror}", details={"path": str(path)}) from None
    except json.JSONDecodeError as e:
        raise ConfigurationError(
            f"scenario '{path}' is not valid JSON: {e.msg}",
            details={"path": str(path), "line": e.lineno, "column": e.colno}
        ) from None
    if tol_scale <= 0:
        raise ConfigurationError(f"--tol-scale must be positive, got {tol_scale}")

    scenario = Scenario.model_validate(raw)
    out_dir = Path(out) if out is not None else Path(scenario.output_dir or settings.OUTPUT_DIR)
    ctx = ScenarioContext(scenario, resolve_seed(seed, scenario, require_seed), tol_scale, out_dir)
    logger.info(f"Loaded scenario '{scenario.name}' from {path} (seed {ctx.seed}, tolerance factor {ctx.factor:g})")
    return ctx


def evaluate_hypotheses(ctx: ScenarioContext) -> StageReport:
    """Theorem-level gate: exponent gaps, contraction, monotone guard and the split Lipschitz sum."""
    cert, p = ctx.dichotomy, ctx.p
    checks = hypothesis_checks(cert, p)
    guard = monotone_guard(cert, p.delta_f, ctx.lyapunov_settings.eta)
    if p.is_zero:
        guard = guard.model_copy(update={"gating": False, "detail": "not needed for f = 0"})
    checks.append(guard)

    if all(c.passed for c in checks if c.ref.startswith("hypothesis.")):
        trivial = ctx.fam.stable_rank == 0 or ctx.fam.unstable_rank == 0
        total = 0.0 if trivial else ctx.solver.lipschitz_budget(STABLE) + ctx.solver.lipschitz_budget(UNSTABLE)
        checks.append(CheckResult(name="Lip(h_s) + Lip(h_u) < 1", ref="splitting.lipschitz_sum",
                                  passed=total < 1.0, worst_margin=1.0 - total, samples=1))
    else:
        checks.append(CheckResult(name="Lip(h_s) + Lip(h_u) < 1", ref="splitting.lipschitz_sum", passed=False,
                                  detail="not evaluated: the contraction hypotheses fail"))
    return stage_report("gate", checks, data={"certificate": cert.model_dump(), "delta_f": p.delta_f,
                                              "theta": p.theta, "eta": ctx.lyapunov_settings.eta})


def require_gate(report: StageReport):
    """Raise GateError naming the first failed gating hypothesis."""
    for check in report.failed_checks():
        raise GateError(check.name, f"margin {check.worst_margin}", details={"ref": check.ref})
