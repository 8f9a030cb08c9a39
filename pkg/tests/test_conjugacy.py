import math

import numpy as np
import pytest

from core.exceptions import GateError, ValidationError
from services import conjugacy, nonlinear
from services.conjugacy import build_conjugacy
from services.manifolds import STABLE, UNSTABLE
from services.nonlinear import PerturbedFlow
from services.splitting import DecoupledFlows


def failed_refs(report):
    return {c.ref for c in report.checks if not c.passed}


@pytest.fixture(scope="module")
def scalar_nl(scalar_ev, scalar_fam, scalar_q):
    """x' = -x + 0.05 sin x, which has no unstable part and needs no splitting."""
    flow = PerturbedFlow(scalar_ev, nonlinear.sin_perturbation(1, 0.05))
    return flow, build_conjugacy(scalar_q, DecoupledFlows(flow, scalar_fam))


def test_monotone_guard(diag_cert):
    assert conjugacy.monotone_guard(diag_cert, 0.1, 0.5).passed
    guard = conjugacy.monotone_guard(diag_cert, 0.3, 0.5)
    assert not guard.passed
    assert guard.worst_margin == pytest.approx(-0.05)


def test_guard_blocks_large_perturbation(diag_ev, diag_fam, diag_q):
    p = nonlinear.build_perturbation(["0", "0.3*sin(x1)"], 2, 0.3)
    flows = DecoupledFlows(PerturbedFlow(diag_ev, p), diag_fam)
    with pytest.raises(GateError) as info:
        build_conjugacy(diag_q, flows)
    assert info.value.details["ref"] == "conjugacy.monotone_guard"


def test_linear_crossing_times(scalar_crossing):
    # V(t, x) = -|x| along x(t) = e^{-t} x0 crosses -1 at log|x0|
    assert conjugacy.crossing_time_nl(scalar_crossing, 0.0, [math.e]) == pytest.approx(1.0, abs=1e-7)
    assert conjugacy.crossing_time_lin(scalar_crossing, 0.0, [math.e]) == pytest.approx(1.0, abs=1e-7)
    assert scalar_crossing.crossing_time_lin(2.0, [0.5]) == pytest.approx(2.0 + math.log(0.5), abs=1e-7)


def test_crossing_undefined_at_origin(scalar_crossing):
    with pytest.raises(ValidationError):
        scalar_crossing.crossing_time_nl(0.0, [0.0])


def test_unperturbed_conjugacy_is_identity(scalar_q, scalar_decoupled):
    cmap = build_conjugacy(scalar_q, scalar_decoupled)
    assert list(cmap.sides) == [STABLE]
    np.testing.assert_allclose(conjugacy.full_conjugacy(cmap, 0.0, [0.7]), [0.7], atol=1e-8)
    np.testing.assert_allclose(cmap.inverse_conjugacy(1.0, [-1.4]), [-1.4], atol=1e-8)


def test_origin_is_fixed(scalar_nl):
    _, cmap = scalar_nl
    np.testing.assert_array_equal(cmap(0.0, [0.0]), [0.0])
    np.testing.assert_array_equal(cmap.inverse_conjugacy(0.0, [0.0]), [0.0])


def test_scalar_side_maps_invert(scalar_nl):
    _, cmap = scalar_nl
    samples = [(0.0, np.array([0.6])), (1.0, np.array([-1.8])), (-2.0, np.array([3.0]))]
    report = conjugacy.verify_inverse(cmap, STABLE, samples, 1e-6)
    assert report.success, failed_refs(report)


def test_scalar_equivariance(scalar_nl):
    _, cmap = scalar_nl
    samples = [(0.0, 1.0, np.array([0.6])), (1.0, -0.5, np.array([-1.8]))]
    report = conjugacy.verify_equivariance(cmap, STABLE, samples, 1e-5)
    assert report.success, failed_refs(report)
    assert report.tables["v-trace"]


def test_scalar_end_to_end(scalar_nl):
    flow, cmap = scalar_nl
    samples = [(0.0, 1.5, np.array([1.2])), (-1.0, -2.0, np.array([-0.4]))]
    report = conjugacy.check_end_to_end(cmap, flow, samples, 1e-4)
    assert report.success, failed_refs(report)


def test_scalar_homeomorphism(scalar_nl):
    _, cmap = scalar_nl
    report = conjugacy.check_homeomorphism(cmap, 0.0, 2.0, 5, 1e-6)
    assert report.success, failed_refs(report)


def test_injectivity_reports_closest_pair(scalar_nl):
    _, cmap = scalar_nl
    report = conjugacy.check_homeomorphism(cmap, 0.0, 2.0, 5, 1e-6)
    injective = next(c for c in report.checks if c.ref == "conjugacy.injective")
    x, x_tilde = np.array(injective.witness["x"]), np.array(injective.witness["x_tilde"])
    assert np.linalg.norm(x - x_tilde) >= 1.0 - 1e-12
    gap = np.linalg.norm(cmap.conjugacy(0.0, x) - cmap.conjugacy(0.0, x_tilde))
    assert gap == pytest.approx(injective.worst_margin + 1e-9, abs=1e-9)


def test_rate_diagnostics(diag_q, diag_flow):
    rates = conjugacy.rate_diagnostics(diag_q, diag_flow, np.linspace(-2.0, 2.0, 9))
    assert set(rates) >= {"t", "U", "W"}
    assert len(rates["U"]) == 9


@pytest.mark.slow
@pytest.mark.parametrize("side", [STABLE, UNSTABLE])
def test_reference_side_maps(diag_cmap, side):
    x0 = np.array([0.9, 0.0]) if side == STABLE else np.array([0.0, -0.7])
    report = conjugacy.verify_inverse(diag_cmap, side, [(0.0, x0)], 1e-6)
    assert report.success, failed_refs(report)
    report = conjugacy.verify_equivariance(diag_cmap, side, [(0.0, 0.8, x0)], 1e-5)
    assert report.success, failed_refs(report)


@pytest.mark.slow
def test_reference_end_to_end(diag_cmap, diag_flow):
    report = conjugacy.check_end_to_end(diag_cmap, diag_flow, [(0.0, 1.0, np.array([0.8, -0.4]))], 1e-4)
    assert report.success, failed_refs(report)
