import math

import numpy as np
import pytest

from core.exceptions import CertificateError, NotApplicableError
from schemas.certificate import StrictCertificate
from services import lyapunov
from services.lyapunov import StrictLyapunov

TAUS = np.linspace(-5.0, 5.0, 11)
OFFSETS = np.linspace(0.0, 2.0, 9)


def failed_refs(report, gating_only=True):
    return {c.ref for c in report.checks if not c.passed and (c.gating or not gating_only)}


@pytest.fixture(scope="module")
def strict_v(diag_ev, diag_fam, exp_rate, diag_cert):
    return StrictLyapunov(diag_ev, diag_fam, exp_rate, diag_cert)


# -- quadratic S(t) ------------------------------------------------------------------

@pytest.mark.parametrize("t", [-5.0, 0.0, 5.0, 0.3])
def test_reference_operator(diag_q, t):
    np.testing.assert_allclose(diag_q.S(t), np.diag([1.0, -1.0]), atol=1e-5)


def test_scalar_operator(scalar_q):
    assert float(scalar_q.S(1.0)[0, 0]) == pytest.approx(1.0, abs=1e-6)
    assert scalar_q.parts(1.0)[1].shape == (1, 1)


def test_eta_outside_gap_is_rejected(diag_ev, diag_fam, exp_rate, diag_cert):
    with pytest.raises(CertificateError):
        lyapunov.build_S(diag_ev, diag_fam, diag_cert, exp_rate, eta=1.5)


def test_quadratic_form_values(diag_q):
    u, v = lyapunov.eval_UV(diag_q, 0.0, [2.0, 1.0])
    assert u == pytest.approx(3.0, abs=1e-5)
    assert v == pytest.approx(-math.sqrt(3.0), abs=1e-5)
    assert lyapunov.eval_UV(diag_q, 0.0, [0.0, 0.0]) == (0.0, 0.0)
    assert abs(diag_q.U(0.0, [1.0, 1.0])) < 1e-5


def test_operator_properties(diag_q):
    report = lyapunov.check_S_properties(diag_q, np.linspace(-5.0, 5.0, 50))
    assert report.success, failed_refs(report)
    derived = next(c for c in report.checks if c.ref == "quadratic.derivative_bound_as_derived")
    assert derived.passed
    printed = next(c for c in report.checks if c.ref == "quadratic.derivative_bound_as_printed")
    assert not printed.passed and not printed.gating


def test_closed_form_constants_below_measured(diag_q):
    c_s = min(diag_q.strictness_constants(t)[0] for t in TAUS)
    c_u = min(diag_q.strictness_constants(t)[1] for t in TAUS)
    measured_s, measured_u = diag_q.measured_strictness_constants(TAUS)
    assert 0 < c_s <= measured_s
    assert 0 < c_u <= measured_u


def test_constants_need_local_bound(scalar_q):
    with pytest.raises(NotApplicableError):
        scalar_q.strictness_constants(0.0)


def test_quadratic_strictness_and_recovery(diag_q, diag_ev, diag_fam, exp_rate, rng):
    c_s = min(diag_q.strictness_constants(t)[0] for t in TAUS)
    c_u = min(diag_q.strictness_constants(t)[1] for t in TAUS)
    cert = diag_q.strict_certificate(c_s, c_u)
    assert cert.alpha == pytest.approx(-0.5)
    assert cert.beta == pytest.approx(-0.5)

    report = lyapunov.check_strictness(diag_q, cert, diag_ev, diag_fam, exp_rate, TAUS[::3], rng, OFFSETS)
    assert report.success, failed_refs(report)

    recovered, recovery = lyapunov.recover_dichotomy(cert, c_s, c_u, 0.0, diag_ev, diag_fam, exp_rate,
                                                     np.linspace(-10.0, 10.0, 41))
    assert recovery.success, failed_refs(recovery)
    assert recovered.lambda_s == pytest.approx(-0.5)
    assert recovered.lambda_u == pytest.approx(0.5)


def test_quadratic_monotone_along_flow(diag_q, diag_ev):
    report = lyapunov.check_monotonicity(diag_q, diag_ev, 1.0, np.array([0.8, -0.6]), OFFSETS, q=diag_q)
    assert report.success, failed_refs(report)
    assert [row["t"] for row in report.tables["v-trace"]] == pytest.approx(list(1.0 + OFFSETS))


# -- strict sup formula --------------------------------------------------------------

def test_strict_value_on_reference(strict_v, rng):
    for _ in range(10):
        t = rng.uniform(-5.0, 5.0)
        x = rng.uniform(-2.0, 2.0, 2)
        assert strict_v.value(t, x) == pytest.approx(-abs(x[0]) + abs(x[1]), abs=1e-8)


def test_strict_value_examples(diag_ev, diag_fam, exp_rate, diag_cert, strict_v):
    assert lyapunov.strict_V(diag_ev, diag_fam, diag_cert, exp_rate, 0.0, [2.0, 3.0]) == pytest.approx(1.0, abs=1e-9)
    assert strict_v.value(0.0, [0.0, 0.0]) == 0.0
    assert strict_v.value(0.0, [1.0, 0.0]) == pytest.approx(-1.0, abs=1e-9)


def test_strictness_with_exact_constants(strict_v, diag_ev, diag_fam, exp_rate, rng):
    cert = StrictCertificate(C=1.0, epsilon=0.0, alpha=-1.0, beta=-1.0)
    report = lyapunov.check_strictness(strict_v, cert, diag_ev, diag_fam, exp_rate, TAUS[::2], rng, OFFSETS)
    assert report.success, failed_refs(report)


def test_strictness_with_too_fast_decay_fails(strict_v, diag_ev, diag_fam, exp_rate, rng):
    cert = StrictCertificate(C=1.0, epsilon=0.0, alpha=-1.0, beta=-2.0)
    report = lyapunov.check_strictness(strict_v, cert, diag_ev, diag_fam, exp_rate, TAUS[::2], rng, OFFSETS)
    assert "strict.stable_decay" in failed_refs(report)


def test_strict_certificate_constants(strict_v):
    cert, per_tau = strict_v.certificate(TAUS)
    assert cert.alpha == -1.0 and cert.beta == -1.0 and cert.epsilon == 0.0
    assert cert.C >= 2.0
    assert len(per_tau["C_s"]) == len(TAUS)


def test_strict_monotone_along_flow(strict_v, diag_ev):
    report = lyapunov.check_monotonicity(strict_v, diag_ev, -2.0, np.array([1.0, 0.5]), OFFSETS)
    assert report.success, failed_refs(report)


@pytest.mark.parametrize("t", [-4.5, 0.25, 1.5, 3.7])
def test_strict_value_off_lattice(strict_v, t):
    assert strict_v.value(t, [1.0, 0.5]) == pytest.approx(-0.5, abs=1e-8)


def test_strict_value_on_fine_grid(strict_v):
    values = [strict_v.value(t, [1.0, 0.5]) for t in np.linspace(-5.0, 5.0, 41)]
    np.testing.assert_allclose(values, -0.5, atol=1e-8)


def test_recovery_from_exact_strict_constants(diag_ev, diag_fam, exp_rate):
    cert = StrictCertificate(C=1.0, epsilon=0.0, alpha=-1.0, beta=-1.0)
    recovered, report = lyapunov.recover_dichotomy(cert, 8.0, 8.0, 0.0, diag_ev, diag_fam, exp_rate,
                                                   np.linspace(-5.0, 5.0, 21))
    assert report.success, failed_refs(report)
    assert (recovered.lambda_s, recovered.lambda_u) == (-1.0, 1.0)
    assert recovered.D == pytest.approx(1.0)


def test_recovered_constant_scales_with_square_of_c(diag_ev, diag_fam, exp_rate):
    grid = np.linspace(-5.0, 5.0, 21)
    base, _ = lyapunov.recover_dichotomy(StrictCertificate(C=1.0, epsilon=0.0, alpha=-1.0, beta=-1.0),
                                         8.0, 8.0, 0.0, diag_ev, diag_fam, exp_rate, grid)
    inflated, report = lyapunov.recover_dichotomy(StrictCertificate(C=10.0, epsilon=0.0, alpha=-1.0, beta=-1.0),
                                                  8.0, 8.0, 0.0, diag_ev, diag_fam, exp_rate, grid)
    assert report.success, failed_refs(report)
    assert inflated.D == pytest.approx(100.0 * base.D)
    assert (inflated.lambda_s, inflated.lambda_u) == (base.lambda_s, base.lambda_u)
