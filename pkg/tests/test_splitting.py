import numpy as np
import pytest

from core.exceptions import SubspaceError
from services import nonlinear, splitting
from services.manifolds import STABLE, UNSTABLE, LyapunovPerronSolver
from services.splitting import DecoupledFlows, SplitMap


def failed_refs(report):
    return {c.ref for c in report.checks if not c.passed}


PAIRS = [(0.0, np.array([0.8, -0.4])), (1.5, np.array([-1.2, 0.9])), (-2.0, np.array([0.3, 1.7]))]
TRIPLES = [(0.0, 1.0, np.array([0.8, -0.4])), (-1.0, -2.5, np.array([-1.1, 0.2]))]


def test_zero_is_fixed(diag_split):
    np.testing.assert_allclose(diag_split.forward(0.7, np.zeros(2)), np.zeros(2), atol=1e-12)
    np.testing.assert_allclose(diag_split.inverse(0.7, np.zeros(2)), np.zeros(2), atol=1e-12)


def test_round_trip(diag_split):
    report = splitting.check_round_trip(diag_split, PAIRS, 1e-6)
    assert report.success, failed_refs(report)
    assert report.data["lipschitz_sum"] == pytest.approx(0.25)


def test_stable_axis_is_bent_onto_manifold(diag_split, diag_solver):
    # points of the stable manifold map onto the stable subspace
    xi = np.array([1.0, 0.0])
    on_manifold = xi + diag_solver.g_s(0.0, xi)
    np.testing.assert_allclose(diag_split.forward(0.0, on_manifold), xi, atol=1e-8)


@pytest.mark.slow
def test_split_conjugates_to_decoupled_flows(diag_split, diag_decoupled, diag_flow):
    report = splitting.verify_split_conjugation(diag_split, diag_decoupled, diag_flow, TRIPLES, 1e-5)
    assert report.success, failed_refs(report)
    assert len(report.tables["defects"]) == len(TRIPLES)


def test_literal_cut_is_reported_without_gating(diag_solver, diag_decoupled, diag_flow):
    literal = SplitMap(diag_solver, straightened=False)
    report = splitting.verify_split_conjugation(literal, diag_decoupled, diag_flow, TRIPLES[:1], 1e-5, gating=False)
    assert all(not c.gating for c in report.checks)
    assert report.success


@pytest.mark.parametrize("side, x0", [(STABLE, [1.3, 0.0]), (UNSTABLE, [0.0, -0.6])])
def test_decoupled_flow_stays_in_subspace(diag_decoupled, side, x0):
    check = splitting.check_subspace_preservation(diag_decoupled, side, 0.0, np.array(x0), np.linspace(-2.0, 2.0, 9))
    assert check.passed


def test_decoupled_flow_rejects_off_subspace_start(diag_decoupled):
    with pytest.raises(SubspaceError):
        diag_decoupled.stable(1.0, 0.0, [1.0, 1.0])


def test_decoupled_flow_at_initial_time(diag_decoupled):
    np.testing.assert_array_equal(diag_decoupled.unstable(0.5, 0.5, [0.0, 2.0]), [0.0, 2.0])


def test_unperturbed_split_is_identity(diag_ev, diag_fam, exp_rate, diag_cert):
    solver = LyapunovPerronSolver(diag_ev, diag_fam, nonlinear.zero_perturbation(2), exp_rate, diag_cert)
    sm = splitting.build_split_map(solver)
    x = np.array([0.4, -1.3])
    np.testing.assert_allclose(sm.forward(0.0, x), x, atol=1e-12)
    np.testing.assert_allclose(sm.inverse(0.0, x), x, atol=1e-12)


def test_one_sided_system_needs_no_split(scalar_ev, scalar_fam, exp_rate, scalar_cert):
    p = nonlinear.sin_perturbation(1, 0.1)
    solver = LyapunovPerronSolver(scalar_ev, scalar_fam, p, exp_rate, scalar_cert)
    sm = splitting.build_split_map(solver)
    assert sm.identity
    np.testing.assert_array_equal(sm.forward(2.0, [0.5]), [0.5])
    flows = DecoupledFlows(solver.flow, scalar_fam, solver)
    np.testing.assert_allclose(flows.stable(1.0, 0.0, [0.5]), solver.flow.flow(1.0, 0.0, [0.5]), atol=1e-9)


def test_round_trip_at_unit_point(diag_split):
    x = np.array([1.0, 1.0])
    y = diag_split.forward(0.0, x)
    np.testing.assert_allclose(diag_split.inverse(0.0, y), x, atol=1e-6)
    np.testing.assert_allclose(diag_split.forward(0.0, diag_split.inverse(0.0, x)), x, atol=1e-6)


def test_round_trip_off_grid_times(diag_split):
    report = splitting.check_round_trip(diag_split, [(0.37, np.array([0.5, -0.25])), (-1.13, np.array([-0.6, 0.4]))], 1e-6)
    assert report.success, failed_refs(report)
