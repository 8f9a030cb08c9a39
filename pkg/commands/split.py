"""split: round trips of the decoupling map, its conjugation identity and the literal-cut control."""
import numpy as np

from core.response import StageReport, merge_reports, stage_report
from services import splitting
from services.manifolds import STABLE, UNSTABLE
from services.pipeline import ScenarioContext


def run(ctx: ScenarioContext) -> StageReport:
    sm = ctx.split
    df = ctx.decoupled
    tol = ctx.tolerances
    rng = ctx.rng("split")
    count = ctx.samples.count
    pairs = ctx.pairs(rng, count)
    triples = ctx.triples(rng, max(count // 2, 1))

    reports = [
        splitting.check_round_trip(sm, pairs, tol.round_trip),
        splitting.verify_split_conjugation(sm, df, ctx.pf, triples, tol.split),
    ]
    if not sm.identity:
        literal = splitting.SplitMap(ctx.solver, straightened=False)
        control = splitting.verify_split_conjugation(literal, df, ctx.pf, triples[:4], tol.split, gating=False)
        reports.append(control.model_copy(update={"stage": "split_literal", "tables": {}}))

    subspace = []
    offsets = np.linspace(-ctx.samples.dt_max, ctx.samples.dt_max, 9)
    for side, rank in ((STABLE, ctx.fam.stable_rank), (UNSTABLE, ctx.fam.unstable_rank)):
        if not rank:
            continue
        tau, x0 = ctx.pairs(rng, 1, side)[0]
        subspace.append(splitting.check_subspace_preservation(df, side, tau, x0, tau + offsets))
    reports.append(stage_report("subspaces", subspace))
    return merge_reports("split", reports, data={"lipschitz_sum": sm.lipschitz, "identity": sm.identity},
                         meta=ctx.meta())
