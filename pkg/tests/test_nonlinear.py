import math

import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings, strategies as st

from core.exceptions import BindingError, ValidationError
from schemas.certificate import GrowthCertificate
from services import growth, linflow, nonlinear
from services.linflow import TransitionEvaluator
from services.nonlinear import PerturbedFlow


def failed_refs(report):
    return {c.ref for c in report.checks if not c.passed}


def test_phi_with_damping(exp_rate):
    p = nonlinear.build_perturbation(["0.1*exp(-abs(t))*sin(x1)"], 1, 0.1, theta=1.0)
    assert float(nonlinear.phi(p, exp_rate, 2.0)) == pytest.approx(0.1 * math.exp(-2.0))
    assert float(nonlinear.phi(p, exp_rate, -2.0)) == pytest.approx(0.1 * math.exp(-2.0))
    assert float(nonlinear.phi(p, exp_rate, 0.0)) == pytest.approx(0.1)


def test_phi_polynomial_rate():
    rate = growth.polynomial(1.0)
    p = nonlinear.zero_perturbation(1, delta_f=0.1)
    assert float(nonlinear.phi(p, rate, 3.0)) == pytest.approx(0.1 / 4.0)


def test_component_count_must_match_dimension():
    with pytest.raises(ValidationError):
        nonlinear.build_perturbation(["0"], 2, 0.1)


def test_component_index_must_be_in_range():
    with pytest.raises(BindingError):
        nonlinear.build_perturbation(["sin(x3)", "0"], 2, 0.1)


def test_sin_perturbation_is_admissible(sin_p, exp_rate):
    report = nonlinear.check_admissible(sin_p, exp_rate, count=500, seed=3)
    assert report.success, failed_refs(report)


def test_damped_perturbation_is_admissible(exp_rate):
    p = nonlinear.sin_perturbation(1, 0.05, theta=0.2)
    report = nonlinear.check_admissible(p, exp_rate, count=500, seed=5)
    assert report.success, failed_refs(report)


def test_quadratic_perturbation_is_not_admissible(exp_rate):
    p = nonlinear.build_perturbation(["x1^2"], 1, 0.1)
    report = nonlinear.check_admissible(p, exp_rate, count=200, seed=1)
    assert "perturbation.lipschitz" in failed_refs(report)


def test_offset_perturbation_fails_zero_condition(exp_rate):
    p = nonlinear.build_perturbation(["0.01 + 0.1*sin(x1)"], 1, 0.1)
    report = nonlinear.check_admissible(p, exp_rate, count=50, seed=1)
    assert "perturbation.zero" in failed_refs(report)


def test_zero_perturbation_gives_linear_flow(diag_ev):
    pf = PerturbedFlow(diag_ev, nonlinear.zero_perturbation(2))
    x0 = np.array([0.3, -1.2])
    np.testing.assert_allclose(pf.flow(1.5, -0.5, x0), diag_ev.transition(1.5, -0.5) @ x0, rtol=1e-8, atol=1e-10)


def test_linear_perturbation_shifts_exponent():
    ev = TransitionEvaluator(linflow.scalar_stable())
    pf = PerturbedFlow(ev, nonlinear.build_perturbation(["0.1*x1"], 1, 0.1))
    assert float(pf.flow(1.0, 0.0, [1.0])[0]) == pytest.approx(math.exp(-0.9), rel=1e-8)


def test_trajectory_within_budget_follows_linear_flow(diag_ev):
    pf = PerturbedFlow(diag_ev, nonlinear.zero_perturbation(2))
    ts = np.linspace(0.0, -2.0, 101)
    states = pf.trajectory_within(0.0, [1.0, 1.0], ts, budget=10 ** 6)
    assert states.shape == (101, 2)
    np.testing.assert_allclose(states, np.column_stack([np.exp(-ts), np.exp(ts)]), rtol=1e-8)


def test_trajectory_within_stops_on_expensive_chunk(diag_flow):
    ts = np.linspace(0.0, -20.0, 1001)
    states = diag_flow.trajectory_within(0.0, [1.0, 1.0], ts, budget=1)
    assert states.shape == (26, 2)
    np.testing.assert_allclose(states[-1], diag_flow.flow(ts[25], 0.0, [1.0, 1.0]), rtol=1e-8)


def test_flow_at_initial_time_is_identity(diag_flow):
    x0 = np.array([0.7, 0.2])
    assert np.array_equal(diag_flow.flow(0.4, 0.4, x0), x0)


@given(st.floats(min_value=-2, max_value=2), st.floats(min_value=-2, max_value=2),
       st.floats(min_value=-1, max_value=1), st.floats(min_value=-1, max_value=1))
@hyp_settings(max_examples=25, deadline=None)
def test_flow_group_property(diag_flow, s, t, a, b):
    x0 = np.array([a, b])
    via = diag_flow.flow(t, s, diag_flow.flow(s, 0.0, x0))
    np.testing.assert_allclose(via, diag_flow.flow(t, 0.0, x0), rtol=1e-7, atol=1e-8)


def test_gronwall_bounds_hold(diag_flow, exp_rate, unit_growth, rng):
    report = nonlinear.check_gronwall(diag_flow, exp_rate, unit_growth, rng, count=60)
    assert report.success, failed_refs(report)
    assert report.data["exponent"] == pytest.approx(1.1)


def test_gronwall_detects_undersized_rate(diag_flow, exp_rate, rng):
    cert = GrowthCertificate(D=1.0, lambda_max=0.1)
    report = nonlinear.check_gronwall(diag_flow, exp_rate, cert, rng, count=60)
    assert not report.success
    upper = next(c for c in report.checks if c.ref == "gronwall.upper")
    assert not upper.passed
    assert {"tau", "t"} <= set(upper.witness)
