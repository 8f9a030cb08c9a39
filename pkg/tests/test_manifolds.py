import math

import numpy as np
import pytest

from core.exceptions import GateError, SubspaceError
from schemas.certificate import DichotomyCertificate
from schemas.settings import LPSettings
from services import manifolds, nonlinear
from services.manifolds import STABLE, LyapunovPerronSolver


def failed_refs(report):
    return {c.ref for c in report.checks if not c.passed}


def stable_graph(xi):
    """Bounded forward solution of x2' = x2 + 0.1 sin(xi e^{-t}) evaluated at t = 0."""
    return -0.1 * (1.0 - math.cos(xi)) / xi


def test_contraction_factor(diag_solver):
    assert diag_solver.delta_tilde == pytest.approx(0.2)
    assert diag_solver.lipschitz_budget(STABLE) == pytest.approx(0.1 / 0.8)


def test_hypotheses_on_reference(diag_cert, sin_p):
    assert all(c.passed for c in manifolds.hypothesis_checks(diag_cert, sin_p))


def test_large_perturbation_fails_contraction(diag_ev, diag_fam, exp_rate, diag_cert):
    p = nonlinear.build_perturbation(["0", "0.6*sin(x1)"], 2, 0.6)
    with pytest.raises(GateError) as info:
        LyapunovPerronSolver(diag_ev, diag_fam, p, exp_rate, diag_cert)
    assert info.value.details["ref"] == "hypothesis.contraction"


def test_theta_below_nonuniformity_fails(sin_p):
    cert = DichotomyCertificate(D=1.0, lambda_s=-1.0, lambda_u=1.0, nu=0.1)
    refs = {c.ref for c in manifolds.hypothesis_checks(cert, sin_p) if not c.passed}
    assert refs == {"hypothesis.theta"}


def test_graphs_vanish_at_zero(diag_solver):
    np.testing.assert_array_equal(diag_solver.g_s(0.0, [0.0, 0.0]), np.zeros(2))
    np.testing.assert_array_equal(diag_solver.g_u(0.0, [0.0, 0.0]), np.zeros(2))


@pytest.mark.parametrize("xi", [0.5, 1.0, -1.5])
def test_stable_graph_matches_closed_form(diag_solver, xi):
    value = diag_solver.g_s(0.0, [xi, 0.0])
    assert value[0] == pytest.approx(0.0, abs=1e-12)
    assert value[1] == pytest.approx(stable_graph(xi), abs=1e-5)


def test_unstable_graph_is_flat(diag_solver):
    np.testing.assert_allclose(diag_solver.g_u(1.0, [0.0, 0.7]), np.zeros(2), atol=1e-12)


def test_seed_must_lie_in_subspace(diag_solver):
    with pytest.raises(SubspaceError):
        diag_solver.stable_manifold(0.0, [1.0, 1.0])


def test_manifold_is_invariant(diag_solver):
    point = diag_solver.stable_manifold(0.5, [1.2, 0.0])
    assert manifolds.invariance_residual(diag_solver, point, 1.5) < 1e-5


def test_doubling_horizon_changes_nothing(diag_solver):
    point = diag_solver.stable_manifold(0.0, [1.0, 0.0])
    longer = diag_solver.stable_manifold(0.0, [1.0, 0.0], T_h=2.0 * point.T_h)
    assert np.linalg.norm(longer.value - point.value) < 1e-8


def test_picard_contracts(diag_solver):
    point = diag_solver.stable_manifold(0.0, [1.5, 0.0])
    assert point.iterations >= 2
    assert all(m >= -1e-10 for m in manifolds.contraction_margins(point, diag_solver.delta_tilde, 0.1))


def test_leaf_through_base_point(diag_solver):
    x = np.array([0.4, -0.9])
    leaf = diag_solver.stable_leaf(0.0, [0.4, 0.0], x)
    np.testing.assert_allclose(leaf.point, x, atol=1e-9)


def test_unperturbed_leaves_are_affine(diag_ev, diag_fam, exp_rate, diag_cert):
    solver = LyapunovPerronSolver(diag_ev, diag_fam, nonlinear.zero_perturbation(2), exp_rate, diag_cert)
    x = np.array([0.3, 1.1])
    np.testing.assert_array_equal(solver.h_s(0.0, [-2.0, 0.0], x), [0.0, 1.1])
    np.testing.assert_array_equal(solver.h_u(0.0, [0.0, 0.5], x), [0.3, 0.0])
    np.testing.assert_array_equal(solver.g_s(0.0, [1.0, 0.0]), np.zeros(2))


def test_manifold_report(diag_solver, rng):
    report = manifolds.check_manifolds(diag_solver, [0.0, -1.0], rng, count=2)
    assert report.success, failed_refs(report)
    assert report.data["delta_tilde"] == pytest.approx(0.2)


def test_foliation_report(diag_solver, rng):
    report = manifolds.check_foliations(diag_solver, [0.0], rng, count=2)
    assert report.success, failed_refs(report)


def test_straightening_report(diag_solver, rng):
    report = manifolds.check_straightening(diag_solver, [0.0], rng, count=1)
    assert report.success, failed_refs(report)


def test_leaf_horizon_uses_offset_decay(diag_solver):
    assert diag_solver.horizon(0.0, -1, leaf=True) < diag_solver.horizon(0.0, -1)
    assert diag_solver.horizon(0.0, 1, leaf=True) < diag_solver.horizon(0.0, 1)


def test_unstable_leaf_finishes_on_oscillating_base(diag_solver):
    # backward from x = (1, 1) the base reaches x1 ~ e^T and sin(x1) oscillates quickly
    leaf = diag_solver.unstable_leaf(0.0, [0.0, 0.5], [1.0, 1.0])
    np.testing.assert_allclose(leaf.value, [1.0, 0.0], atol=1e-12)
    assert leaf.T_h <= diag_solver.horizon(0.0, -1, leaf=True) + diag_solver.config.step
    assert leaf.tail >= 0.0


def test_base_budget_truncates_leaf(diag_ev, diag_fam, sin_p, exp_rate, diag_cert, diag_flow):
    config = LPSettings(T_h=20.0, base_budget=1)
    solver = LyapunovPerronSolver(diag_ev, diag_fam, sin_p, exp_rate, diag_cert, config, flow=diag_flow)
    leaf = solver.unstable_leaf(0.0, [0.0, 0.5], [1.0, 1.0])
    assert leaf.T_h < 20.0
    assert (leaf.times.size - 1) % 25 == 0
    assert leaf.offsets.shape == (leaf.times.size, 2)
    assert leaf.tail > 0.0
    np.testing.assert_allclose(leaf.value, [1.0, 0.0], atol=1e-12)


def test_foliation_report_records_leaf_tail(diag_solver, rng):
    report = manifolds.check_foliations(diag_solver, [0.5], rng, count=1)
    assert report.success, failed_refs(report)
    assert 0.0 <= report.data["leaf_tail_bound"] < 1e-3


@pytest.mark.parametrize("tau", [0.37, -1.23])
def test_stable_graph_off_grid_tau(diag_solver, tau):
    # the graph of the autonomous reference does not depend on τ
    value = diag_solver.g_s(tau, [1.0, 0.0])
    assert value[1] == pytest.approx(stable_graph(1.0), abs=1e-5)
