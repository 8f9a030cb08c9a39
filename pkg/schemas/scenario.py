from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator

from schemas.certificate import DichotomyCertificate, GrowthCertificate, LocalBound
from schemas.settings import LPSettings, LyapunovSettings, SampleSettings


class LinearSpec(BaseModel):
    n: int = Field(..., ge=1, le=8)
    A: List[List[Union[str, float]]] = Field(..., description="Entries as expressions in t")
    pi0: Union[Literal["spectral"], List[List[float]]]
    label: Optional[str] = None

    @field_validator("A")
    @classmethod
    def entries_as_text(cls, v):
        return [[str(e) for e in row] for row in v]


class PerturbationSpec(BaseModel):
    f: List[str] = Field(..., min_length=1, description="Component expressions in t, x1..xn")
    delta_f: float = Field(..., gt=0)
    theta: float = Field(0.0, ge=0)


class Scenario(BaseModel):
    """A complete run description; certificates are fitted when absent"""
    model_config = ConfigDict(extra="forbid")

    name: str = "scenario"
    growth: Union[str, Dict[str, Any]] = "exp"
    linear: Union[str, LinearSpec]
    perturbation: Optional[PerturbationSpec] = None
    dichotomy: Optional[DichotomyCertificate] = None
    growth_bound: Optional[GrowthCertificate] = None
    local_bound: Optional[LocalBound] = None
    lyapunov: LyapunovSettings = Field(default_factory=LyapunovSettings)
    lp: LPSettings = Field(default_factory=LPSettings)
    samples: SampleSettings = Field(default_factory=SampleSettings)
    seed: Optional[int] = Field(None, ge=0)
    output_dir: Optional[str] = None
    tol_scale: float = Field(1.0, gt=0)
