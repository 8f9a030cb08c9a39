import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from core.exceptions import ConfigurationError, GrowthRateError
from services import growth

GRID = np.linspace(-10.0, 10.0, 41)


def failed_refs(report):
    return {c.ref for c in report.checks if not c.passed}


def test_exponential_rate(exp_rate):
    assert float(exp_rate.value(1.0)) == pytest.approx(math.e)
    assert float(exp_rate.log_rate(-3.0)) == pytest.approx(1.0)
    assert float(exp_rate.log_value(700.0)) == 700.0


def test_chi_extension():
    rate = growth.from_config({"chi": "t+1", "dchi": "1"})
    assert float(rate.value(1.0)) == pytest.approx(2.0)
    assert float(rate.value(-1.0)) == pytest.approx(0.5)
    assert float(rate.value(0.0)) == pytest.approx(1.0)
    # μ'(t) = χ'(|t|)/χ(|t|)² on the negative half-line
    assert float(rate.deriv(-1.0)) == pytest.approx(0.25)


def test_chi_must_start_at_one():
    with pytest.raises(GrowthRateError):
        growth.from_chi(lambda a: a + 2.0, lambda a: np.ones_like(a))


def test_chi_must_increase():
    with pytest.raises(GrowthRateError):
        growth.from_config({"chi": "1 + sin(t)", "dchi": "cos(t)"})


def test_chi_alone_derives_its_derivative():
    rate = growth.from_config({"chi": "t+1"})
    assert float(rate.deriv(1.0)) == pytest.approx(1.0)
    assert float(rate.deriv(-1.0)) == pytest.approx(0.25)
    report = growth.validate(rate, np.linspace(-5.0, 5.0, 41))
    assert report.success


@pytest.mark.parametrize("chi, dchi", [
    ("exp(t^2)", "2*t*exp(t^2)"),
    ("(1+t)^2.5", "2.5*(1+t)^1.5"),
    ("1 + t*tanh(t)", "tanh(t) + t*(1 - tanh(t)^2)"),
    ("1 + log(1 + t)", "1/(1 + t)"),
    ("sqrt(1 + t^2) + t", "t/sqrt(1 + t^2) + 1"),
    ("1 + abs(t) + t/(1 + t)", "sign(t) + 1/(1 + t)^2"),
    ("1 + t - sin(t)", "1 - cos(t)"),
])
def test_derived_chi_matches_given_derivative(chi, dchi):
    derived = growth.from_config({"chi": chi})
    explicit = growth.from_config({"chi": chi, "dchi": dchi})
    ts = np.linspace(-2.0, 2.0, 17)
    np.testing.assert_allclose(derived.deriv(ts), explicit.deriv(ts), rtol=1e-12)


def test_unknown_growth_keyword():
    with pytest.raises(ConfigurationError):
        growth.from_config("gauss")


@pytest.mark.parametrize("rate", [growth.exponential(), growth.polynomial(1.0), growth.polynomial(2.5)])
def test_standard_rates_validate(rate):
    report = growth.validate(rate, GRID)
    assert report.success, failed_refs(report)


def test_non_positive_rate_fails_validation():
    rate = growth.custom(lambda t: t, lambda t: np.ones_like(t))
    report = growth.validate(rate, GRID)
    assert not report.success
    assert "growth.positive" in failed_refs(report)


def test_polynomial_endpoints_are_advisory():
    report = growth.validate(growth.polynomial(0.1), GRID)
    endpoint = next(c for c in report.checks if c.ref == "growth.endpoints")
    assert not endpoint.gating


def test_validation_grid_must_be_sorted():
    with pytest.raises(ConfigurationError):
        growth.validate(growth.exponential(), [1.0, 0.0, 2.0])


def test_horizon_exponential(exp_rate):
    assert growth.horizon(exp_rate, 2.0, 5.0, 100.0) == pytest.approx(5.0, abs=1e-8)
    assert growth.horizon(exp_rate, 2.0, 5.0, 100.0, direction=-1) == pytest.approx(5.0, abs=1e-8)
    assert growth.horizon(exp_rate, 0.0, 500.0, 100.0) == 100.0


@given(st.floats(min_value=-30, max_value=30), st.floats(min_value=-30, max_value=30))
def test_chi_rate_is_monotone(a, b):
    rate = growth.polynomial(1.0)
    lo, hi = sorted((a, b))
    assert float(rate.value(lo)) <= float(rate.value(hi))
