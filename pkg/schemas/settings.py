from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from core.config import settings


class LyapunovSettings(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    eta: float = Field(0.5, gt=0, description="Gap inside the dichotomy exponents")
    T_cut: float = Field(default_factory=lambda: settings.T_CUT, gt=0, description="Cap of the quadrature truncation horizon")
    quad_tol: float = Field(default_factory=lambda: settings.QUAD_TOL, gt=0)
    T_sup: float = Field(default_factory=lambda: settings.T_SUP, gt=0, description="Horizon of the sup formulas")
    lattice_step: float = Field(default_factory=lambda: settings.LATTICE_STEP, gt=0)

    def scaled(self, factor: float) -> "LyapunovSettings":
        return self.model_copy(update={"quad_tol": self.quad_tol * factor})


class LPSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    step: float = Field(default_factory=lambda: settings.LP_STEP, gt=0, description="Uniform grid step")
    fp_tol: float = Field(default_factory=lambda: settings.FP_TOL, gt=0)
    max_iter: int = Field(default_factory=lambda: settings.FP_MAX_ITER, ge=1)
    T_h_cap: float = Field(default_factory=lambda: settings.T_H_CAP, gt=0)
    T_h: Optional[float] = Field(None, gt=0, description="Fixed truncation horizon; derived from the tail bound when absent")
    rho: Optional[float] = Field(None, gt=1, description="Weighted-norm exponent of the continuity diagnostic")
    contraction_slack: float = Field(0.1, ge=0)
    lip_slack: float = Field(0.1, ge=0)
    base_budget: int = Field(800, ge=1, description="Right-hand side evaluations allowed per grid interval of a leaf base trajectory")

    def scaled(self, factor: float) -> "LPSettings":
        return self.model_copy(update={"fp_tol": self.fp_tol * factor})


class SampleSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    x_radius: float = Field(2.0, gt=0)
    t_radius: float = Field(5.0, gt=0)
    dt_max: float = Field(2.0, gt=0)
    count: int = Field(20, ge=1)
    grid_radius: float = Field(10.0, gt=0)
    grid_step: float = Field(0.5, gt=0)
    admissible_count: int = Field(default_factory=lambda: settings.ADMISSIBLE_SAMPLES, ge=1)
    mesh_points: int = Field(5, ge=2, description="Points per axis of the homeomorphism mesh")


class Tolerances(BaseModel):
    model_config = ConfigDict(frozen=True)

    rtol: float = Field(default_factory=lambda: settings.INTEGRATOR_RTOL, gt=0)
    atol: float = Field(default_factory=lambda: settings.INTEGRATOR_ATOL, gt=0)
    margin: float = Field(default_factory=lambda: settings.MARGIN_TOL, ge=0)
    cocycle: float = Field(default_factory=lambda: settings.COCYCLE_TOL, gt=0)
    root: float = Field(default_factory=lambda: settings.ROOT_TOL, gt=0)
    e2e: float = Field(default_factory=lambda: settings.E2E_TOL, gt=0)
    round_trip: float = Field(1e-6, gt=0)
    equivariance: float = Field(1e-5, gt=0)
    split: float = Field(1e-5, gt=0)

    def scaled(self, factor: float) -> "Tolerances":
        return Tolerances(**{k: v * factor for k, v in self.model_dump().items()})
