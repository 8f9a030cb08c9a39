from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class DichotomyCertificate(BaseModel):
    """Constants of a nonuniform μ-dichotomy; lambda_u is None when the unstable part is empty"""
    model_config = ConfigDict(frozen=True)

    D: float = Field(..., ge=1, description="Amplitude constant")
    lambda_s: float = Field(..., lt=0, description="Contraction exponent on the stable part")
    lambda_u: Optional[float] = Field(None, gt=0, description="Expansion exponent on the unstable part")
    nu: float = Field(0.0, ge=0, description="Nonuniformity exponent on the stable part")
    omega: float = Field(0.0, ge=0, description="Nonuniformity exponent on the unstable part")

    @model_validator(mode="after")
    def side_conditions(self):
        if self.lambda_s + self.nu >= 0:
            raise ValueError(f"lambda_s + nu must be negative, got {self.lambda_s + self.nu}")
        if self.lambda_u is not None and self.lambda_u - self.omega <= 0:
            raise ValueError(f"lambda_u - omega must be positive, got {self.lambda_u - self.omega}")
        return self

    @property
    def has_unstable(self) -> bool:
        return self.lambda_u is not None

    def reversed(self) -> "DichotomyCertificate":
        """Certificate of the time-reversed system: (lambda_s, nu) and (-lambda_u, omega) swap."""
        if self.lambda_u is None:
            raise ValueError("reversal needs an unstable exponent")
        return DichotomyCertificate(
            D=self.D, lambda_s=-self.lambda_u, lambda_u=-self.lambda_s, nu=self.omega, omega=self.nu
        )


class LocalBound(BaseModel):
    """Local bound ‖Ψ(t,s)‖ ≤ D̃ μ(|t|)^λ̃ for |t−s| ≤ c"""
    model_config = ConfigDict(frozen=True)

    D_tilde: float = Field(..., ge=1)
    c: float = Field(1.0, gt=0)
    lambda_tilde: float = Field(0.0, ge=0, description="Zero is allowed for bounded A(t)")


class GrowthCertificate(BaseModel):
    """Constants of a nonuniform μ-bounded growth"""
    model_config = ConfigDict(frozen=True)

    D: float = Field(..., ge=1)
    lambda_max: float = Field(..., gt=0)
    theta: float = Field(0.0, ge=0)
    local: Optional[LocalBound] = None


class StrictCertificate(BaseModel):
    """Constants (C, ε, α, β) of a strict Lyapunov function"""
    model_config = ConfigDict(frozen=True)

    C: float = Field(..., gt=0)
    epsilon: float = Field(0.0, ge=0)
    alpha: float = Field(..., lt=0)
    beta: float = Field(..., lt=0)
