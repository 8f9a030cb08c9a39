import math
from pathlib import Path

import numpy as np
import pytest

from schemas.certificate import DichotomyCertificate, GrowthCertificate, LocalBound
from schemas.settings import LPSettings, LyapunovSettings
from services import growth, linflow, nonlinear
from services.conjugacy import CrossingSolver, build_conjugacy
from services.linflow import ProjectionFamily, TransitionEvaluator
from services.lyapunov import QuadraticLyapunov
from services.manifolds import STABLE, LyapunovPerronSolver
from services.nonlinear import PerturbedFlow
from services.splitting import DecoupledFlows, build_split_map

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def exp_rate():
    return growth.exponential()


# -- diagonal reference: A = diag(-1, 1), f = (0, 0.1 sin x1) ------------------

@pytest.fixture(scope="session")
def diag_ev():
    return TransitionEvaluator(linflow.diag_hyperbolic())


@pytest.fixture(scope="session")
def diag_fam(diag_ev):
    return ProjectionFamily(diag_ev)


@pytest.fixture(scope="session")
def diag_cert():
    return DichotomyCertificate(D=1.0, lambda_s=-1.0, lambda_u=1.0)


@pytest.fixture(scope="session")
def diag_local():
    # ‖Ψ(t,s)‖ = e^{|t-s|} ≤ e on |t-s| ≤ 1
    return LocalBound(D_tilde=math.e, c=1.0, lambda_tilde=0.0)


@pytest.fixture(scope="session")
def sin_p():
    return nonlinear.build_perturbation(["0", "0.1*sin(x1)"], 2, 0.1)


@pytest.fixture(scope="session")
def diag_flow(diag_ev, sin_p):
    return PerturbedFlow(diag_ev, sin_p)


@pytest.fixture(scope="session")
def diag_q(diag_ev, diag_fam, exp_rate, diag_cert, diag_local):
    return QuadraticLyapunov(diag_ev, diag_fam, exp_rate, diag_cert, LyapunovSettings(eta=0.5), diag_local)


@pytest.fixture(scope="session")
def diag_solver(diag_ev, diag_fam, sin_p, exp_rate, diag_cert, diag_flow):
    return LyapunovPerronSolver(diag_ev, diag_fam, sin_p, exp_rate, diag_cert, LPSettings(), flow=diag_flow)


@pytest.fixture(scope="session")
def diag_split(diag_solver):
    return build_split_map(diag_solver)


@pytest.fixture(scope="session")
def diag_decoupled(diag_flow, diag_fam, diag_solver):
    return DecoupledFlows(diag_flow, diag_fam, diag_solver)


@pytest.fixture(scope="session")
def diag_cmap(diag_q, diag_decoupled, diag_split):
    return build_conjugacy(diag_q, diag_decoupled, diag_split)


# -- scalar x' = -x -------------------------------------------------------------

@pytest.fixture(scope="session")
def scalar_ev():
    return TransitionEvaluator(linflow.scalar_stable())


@pytest.fixture(scope="session")
def scalar_fam(scalar_ev):
    return ProjectionFamily(scalar_ev)


@pytest.fixture(scope="session")
def scalar_cert():
    return DichotomyCertificate(D=1.0, lambda_s=-1.0)


@pytest.fixture(scope="session")
def scalar_q(scalar_ev, scalar_fam, exp_rate, scalar_cert):
    return QuadraticLyapunov(scalar_ev, scalar_fam, exp_rate, scalar_cert, LyapunovSettings(eta=0.5))


@pytest.fixture(scope="session")
def scalar_decoupled(scalar_ev, scalar_fam):
    return DecoupledFlows(PerturbedFlow(scalar_ev, nonlinear.zero_perturbation(1)), scalar_fam)


@pytest.fixture(scope="session")
def scalar_crossing(scalar_q, scalar_decoupled):
    return CrossingSolver(scalar_q, scalar_decoupled, STABLE)


@pytest.fixture(scope="session")
def unit_growth():
    return GrowthCertificate(D=1.0, lambda_max=1.0, theta=0.0)
