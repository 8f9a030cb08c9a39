"""dichotomy: evolution operator residuals, projection family and the certificate checks."""
from core.response import StageReport, merge_reports
from services import linflow
from services.pipeline import ScenarioContext


def run(ctx: ScenarioContext) -> StageReport:
    tol = ctx.tolerances
    rng = ctx.rng("dichotomy")
    reports = [
        linflow.check_cocycle(ctx.ev, rng, count=ctx.samples.count, radius=ctx.samples.t_radius, tol=tol.cocycle),
        linflow.check_projection(ctx.ev, ctx.fam, ctx.grid),
        linflow.verify_dichotomy(ctx.ev, ctx.fam, ctx.rate, ctx.dichotomy, ctx.grid, tol.margin),
        linflow.verify_bounded_growth(ctx.ev, ctx.rate, ctx.growth_bound, ctx.grid, tol.margin),
    ]
    data = {
        "dichotomy_source": ctx.dichotomy_source,
        "stable_rank": ctx.fam.stable_rank,
        "unstable_rank": ctx.fam.unstable_rank,
    }
    return merge_reports("dichotomy", reports, data=data, meta=ctx.meta())
