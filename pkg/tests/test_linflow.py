import math

import numpy as np
import pytest

from core.exceptions import CertificateError, NotApplicableError, ValidationError
from schemas.certificate import DichotomyCertificate, GrowthCertificate, LocalBound
from services import linflow
from services.linflow import ProjectionFamily, TransitionEvaluator

GRID = np.linspace(-10.0, 10.0, 41)


def failed_refs(report):
    return {c.ref for c in report.checks if not c.passed}


def test_diagonal_transition(diag_ev):
    np.testing.assert_allclose(diag_ev.transition(1.0, 0.0), np.diag([math.exp(-1.0), math.e]), rtol=1e-9)


def test_transition_at_equal_times_is_identity(diag_ev):
    assert np.array_equal(diag_ev.transition(2.5, 2.5), np.eye(2))


def test_time_dependent_transition_matches_closed_form():
    ev = TransitionEvaluator(linflow.bv_scalar_stable())
    expected = math.exp(-math.pi - 0.1 * math.pi)
    assert float(ev.transition(math.pi, 0.0)[0, 0]) == pytest.approx(expected, abs=1e-7)


def test_time_dependent_cocycle(rng):
    ev = TransitionEvaluator(linflow.bv_scalar_stable())
    report = linflow.check_cocycle(ev, rng, count=20, radius=5.0)
    assert report.success, failed_refs(report)


@pytest.mark.parametrize("t", [-3.0, 0.0, 2.5])
def test_constant_projection(diag_fam, t):
    np.testing.assert_allclose(diag_fam.projection(t), np.diag([1.0, 0.0]), atol=1e-12)


def test_projection_at_anchor_is_pi0(diag_fam):
    assert np.array_equal(diag_fam.projection(0.0), diag_fam.pi0)


def test_projection_properties(diag_ev, diag_fam):
    report = linflow.check_projection(diag_ev, diag_fam, np.linspace(-5.0, 5.0, 21))
    assert report.success, failed_refs(report)


def test_spectral_projection_of_triangular_matrix():
    p = linflow.spectral_projection(np.array([[-1.0, 1.0], [0.0, 2.0]]))
    np.testing.assert_allclose(p, [[1.0, -1.0 / 3.0], [0.0, 0.0]], atol=1e-12)


def test_spectral_projection_needs_hyperbolic_matrix():
    with pytest.raises(ValidationError):
        linflow.spectral_projection(np.array([[0.0, 1.0], [-1.0, 0.0]]))


def test_non_idempotent_anchor_rejected():
    with pytest.raises(ValidationError):
        linflow.build_system(2, [["-1", "0"], ["0", "1"]], [[1.0, 1.0], [0.0, 1.0]])


def test_reference_dichotomy_holds(diag_ev, diag_fam, exp_rate, diag_cert):
    report = linflow.verify_dichotomy(diag_ev, diag_fam, exp_rate, diag_cert, GRID)
    assert report.success, failed_refs(report)
    assert all(c.worst_margin >= -1e-9 for c in report.checks)


def test_too_strong_contraction_is_refuted(diag_ev, diag_fam, exp_rate):
    cert = DichotomyCertificate(D=1.0, lambda_s=-1.5, lambda_u=1.0)
    report = linflow.verify_dichotomy(diag_ev, diag_fam, exp_rate, cert, GRID)
    assert not report.success
    assert failed_refs(report) == {"dichotomy.stable_bound"}
    stable = next(c for c in report.checks if c.ref == "dichotomy.stable_bound")
    assert stable.witness["t"] > stable.witness["s"]


def test_positive_stable_exponent_is_rejected():
    with pytest.raises(CertificateError):
        linflow.make_dichotomy_certificate(D=1.0, lambda_s=0.1, lambda_u=1.0)


def test_unstable_exponent_absent_for_stable_system(scalar_cert):
    with pytest.raises(NotApplicableError):
        linflow.unstable_exponent(scalar_cert)


def test_bounded_growth(diag_ev, exp_rate, unit_growth):
    report = linflow.verify_bounded_growth(diag_ev, exp_rate, unit_growth, GRID)
    assert report.success, failed_refs(report)


def test_undersized_growth_rate_fails(diag_ev, exp_rate):
    cert = GrowthCertificate(D=1.0, lambda_max=0.5)
    report = linflow.verify_bounded_growth(diag_ev, exp_rate, cert, GRID)
    assert "growth_bound.global" in failed_refs(report)


def test_local_bound(diag_ev, exp_rate):
    cert = GrowthCertificate(D=1.0, lambda_max=1.0, local=LocalBound(D_tilde=math.e ** 2, c=1.0, lambda_tilde=1.0))
    report = linflow.verify_bounded_growth(diag_ev, exp_rate, cert, np.linspace(-5.0, 5.0, 21))
    assert report.success, failed_refs(report)


def test_fitted_constants_recover_reference(diag_ev, diag_fam, exp_rate):
    cert = linflow.fit_dichotomy_constants(diag_ev, diag_fam, exp_rate, GRID)
    assert cert.lambda_s == pytest.approx(-1.0, abs=0.02)
    assert cert.lambda_u == pytest.approx(1.0, abs=0.02)
    assert cert.nu == pytest.approx(0.0, abs=0.02)
    assert cert.omega == pytest.approx(0.0, abs=0.02)
    assert linflow.verify_dichotomy(diag_ev, diag_fam, exp_rate, cert, GRID).success


def test_fit_on_stable_system_has_no_unstable_exponent(scalar_ev, scalar_fam, exp_rate):
    cert = linflow.fit_dichotomy_constants(scalar_ev, scalar_fam, exp_rate, GRID)
    assert cert.lambda_u is None
    assert cert.lambda_s == pytest.approx(-1.0, abs=0.02)


def test_fitted_growth_constants_hold(diag_ev, exp_rate):
    cert = linflow.fit_growth_constants(diag_ev, exp_rate, GRID)
    assert cert.lambda_max == pytest.approx(1.0, abs=0.02)
    assert linflow.verify_bounded_growth(diag_ev, exp_rate, cert, GRID).success


def test_scalar_projection_family_is_trivial(scalar_ev):
    fam = ProjectionFamily(scalar_ev)
    assert fam.stable_rank == 1 and fam.unstable_rank == 0
    np.testing.assert_array_equal(fam.complement(4.0), np.zeros((1, 1)))


@pytest.fixture(scope="module")
def wobbly_ev():
    # integrated rather than exponentiated: Ψ11(t,s) = exp(−(t−s) + 0.5(sin t − sin s))
    return TransitionEvaluator(linflow.build_system(2, [["-1 + 0.5*cos(t)", "0"], ["0", "1"]], [[1.0, 0.0], [0.0, 0.0]]))


def test_transport_keeps_sides_apart(wobbly_ev):
    fam = ProjectionFamily(wobbly_ev)
    unstable = fam.transport(GRID, 10.0, "unstable")
    stable = fam.transport(GRID, -10.0, "stable")
    assert np.all(unstable[:, 0, :] == 0.0) and np.all(unstable[:, :, 0] == 0.0)
    assert np.all(stable[:, 1, :] == 0.0) and np.all(stable[:, :, 1] == 0.0)


def test_integrated_dichotomy_holds_on_wide_grid(wobbly_ev, exp_rate):
    fam = ProjectionFamily(wobbly_ev)
    cert = DichotomyCertificate(D=3.0, lambda_s=-1.0, lambda_u=1.0)
    report = linflow.verify_dichotomy(wobbly_ev, fam, exp_rate, cert, GRID)
    assert report.success, failed_refs(report)
    fitted = linflow.fit_dichotomy_constants(wobbly_ev, fam, exp_rate, GRID)
    assert fitted.lambda_s == pytest.approx(-1.0, abs=0.1)
    assert fitted.lambda_u == pytest.approx(1.0, abs=1e-6)
    assert linflow.verify_dichotomy(wobbly_ev, fam, exp_rate, fitted, GRID).success


def test_complement_is_exact_off_the_anchor(diag_fam):
    for t in (-9.5, 0.25, 7.75):
        q = diag_fam.complement(t)
        assert q[0, 0] == 0.0 and q[0, 1] == 0.0 and q[1, 0] == 0.0
        assert q[1, 1] == pytest.approx(1.0, abs=1e-14)
