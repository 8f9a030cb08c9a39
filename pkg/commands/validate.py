"""validate: growth rate, perturbation admissibility, certificates and the hypothesis gate."""
from core.response import StageReport, merge_reports, stage_report
from services import growth as growth_service
from services import linflow, nonlinear
from services.pipeline import ScenarioContext, evaluate_hypotheses


def run(ctx: ScenarioContext) -> StageReport:
    tol = ctx.tolerances
    samples = ctx.samples
    rng = ctx.rng("validate")
    reports = [
        growth_service.validate(ctx.rate, ctx.grid),
        nonlinear.check_admissible(ctx.p, ctx.rate, count=samples.admissible_count, seed=ctx.seed),
        linflow.verify_dichotomy(ctx.ev, ctx.fam, ctx.rate, ctx.dichotomy, ctx.grid, tol.margin),
        linflow.verify_bounded_growth(ctx.ev, ctx.rate, ctx.growth_bound, ctx.grid, tol.margin),
        nonlinear.check_gronwall(ctx.pf, ctx.rate, ctx.growth_bound, rng, count=5 * samples.count,
                                 t_radius=samples.t_radius, dt_max=samples.dt_max, x_radius=samples.x_radius,
                                 tol=tol.margin),
    ]
    # the gate is informational here; the commands that need it enforce it
    gate = evaluate_hypotheses(ctx)
    advisory = [c.model_copy(update={"gating": False}) for c in gate.checks]
    reports.append(stage_report("gate", advisory, data=gate.data))
    data = {
        "dichotomy_source": ctx.dichotomy_source,
        "growth_bound": ctx.growth_bound.model_dump(),
    }
    return merge_reports("validate", reports, data=data, meta=ctx.meta())
