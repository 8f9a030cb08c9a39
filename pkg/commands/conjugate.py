"""conjugate: crossing-time maps on each side, the assembled conjugacy and its diagnostics."""
import numpy as np

from core.response import StageReport, merge_reports
from services import conjugacy
from services.pipeline import ScenarioContext, evaluate_hypotheses, require_gate

RATE_POINTS = 81


def run(ctx: ScenarioContext) -> StageReport:
    gate = evaluate_hypotheses(ctx)
    require_gate(gate)
    cmap = ctx.conjugacy
    tol = ctx.tolerances
    samples = ctx.samples
    rng = ctx.rng("conjugate")
    count = samples.count

    reports = [gate]
    for side in cmap.sides:
        triples = ctx.triples(rng, count, side)
        reports.append(conjugacy.verify_equivariance(cmap, side, triples, tol.equivariance))
        reports.append(conjugacy.verify_inverse(cmap, side, [(tau, x) for tau, _, x in triples], tol.round_trip))
        reports.append(conjugacy.check_continuity(cmap, side, ctx.quadratic_certificate, ctx.growth_bound,
                                                  ctx.p.delta_f, ctx.taus(rng, 3), rng))
    reports.append(conjugacy.check_end_to_end(cmap, ctx.pf, ctx.triples(rng, max(count // 2, 1)), tol.e2e))
    reports.append(conjugacy.check_homeomorphism(cmap, 0.0, samples.x_radius, samples.mesh_points,
                                                 tol.round_trip, rng))

    ts = np.linspace(-samples.t_radius, samples.t_radius, RATE_POINTS)
    rates = conjugacy.rate_diagnostics(ctx.quadratic, ctx.pf, ts)
    data = {
        "rates": rates,
        "U_min": float(np.min(rates["U"])),
        "W_monotonicity_min": float(np.min(-np.diff(rates["W"]))),
        "quadratic_certificate": ctx.quadratic_certificate.model_dump(),
    }
    return merge_reports("conjugate", reports, data=data, meta=ctx.meta())
