"""manifold: Lyapunov-Perron manifolds, foliations and the straightened axes."""
from core.response import StageReport, merge_reports
from services import manifolds
from services.pipeline import ScenarioContext, evaluate_hypotheses

TRAJECTORY_ROWS = 101


def _trajectory_rows(point) -> list:
    stride = max(1, len(point.times) // (TRAJECTORY_ROWS - 1))
    rows = []
    for t, x in zip(point.times[::stride], point.trajectory[::stride]):
        row = {"t": float(t)}
        row.update({f"x{i}": float(v) for i, v in enumerate(x, start=1)})
        rows.append(row)
    return rows


def run(ctx: ScenarioContext) -> StageReport:
    gate = evaluate_hypotheses(ctx)
    manifolds.require_hypotheses(ctx.dichotomy, ctx.p)
    solver = ctx.solver
    rng = ctx.rng("manifold")
    radius = ctx.samples.x_radius
    taus = ctx.taus(rng, 3)
    reports = [
        manifolds.check_manifolds(solver, taus, rng, radius=radius),
        manifolds.check_foliations(solver, taus, rng, radius=radius),
        manifolds.check_straightening(solver, taus[:2], rng, radius=radius),
    ]
    side, proj = (manifolds.STABLE, ctx.fam.projection(0.0)) if ctx.fam.stable_rank else \
        (manifolds.UNSTABLE, ctx.fam.complement(0.0))
    xi = ctx.state(rng, proj)
    solve = solver.stable_manifold if side == manifolds.STABLE else solver.unstable_manifold
    point = solve(0.0, xi)
    data = {
        "sample": {"side": side, "xi": xi.tolist(), "value": point.value.tolist(), "T_h": point.T_h,
                   "iterations": point.iterations},
        "gate": gate.data,
    }
    report = merge_reports("manifold", reports, data=data, meta=ctx.meta())
    report.tables["trajectory"] = _trajectory_rows(point)
    return report
