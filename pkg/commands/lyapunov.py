"""lyapunov: quadratic S(t), strict sup-formula V, strictness of both and recovery of the dichotomy."""
import numpy as np

from core.response import StageReport, merge_reports
from services import lyapunov as lyapunov_service
from services.pipeline import ScenarioContext

PROPERTY_POINTS = 50
ORACLE_TIMES = (-5.0, 0.0, 5.0)


def run(ctx: ScenarioContext) -> StageReport:
    rng = ctx.rng("lyapunov")
    q, strict = ctx.quadratic, ctx.strict
    samples = ctx.samples
    ts = np.sort(ctx.taus(rng, PROPERTY_POINTS))
    offsets = np.linspace(0.0, samples.dt_max, 9)
    taus = ctx.taus(rng, 4)

    reports = [lyapunov_service.check_S_properties(q, ts)]

    strict_cert, per_tau = strict.certificate(ctx.strictness_taus)
    reports.append(lyapunov_service.check_strictness(strict, strict_cert, ctx.ev, ctx.fam, ctx.rate, taus, rng,
                                                     offsets).model_copy(update={"stage": "strict_v"}))
    quad_cert = ctx.quadratic_certificate
    reports.append(lyapunov_service.check_strictness(q, quad_cert, ctx.ev, ctx.fam, ctx.rate, taus, rng,
                                                     offsets).model_copy(update={"stage": "quadratic_v"}))

    for k, tau in enumerate(taus[:2]):
        x = ctx.state(rng)
        reports.append(lyapunov_service.check_monotonicity(q, ctx.ev, float(tau), x, offsets, q=q)
                       .model_copy(update={"stage": f"quadratic_monotonicity_{k}"}))
        reports.append(lyapunov_service.check_monotonicity(strict, ctx.ev, float(tau), x, offsets)
                       .model_copy(update={"stage": f"strict_monotonicity_{k}"}))

    c_s, c_u = ctx.quadratic_constants
    _, recovery = lyapunov_service.recover_dichotomy(
        quad_cert, c_s, c_u, ctx.local_bound.lambda_tilde, ctx.ev, ctx.fam, ctx.rate, ctx.grid
    )
    reports.append(recovery)

    measured = q.measured_strictness_constants(ctx.strictness_taus)
    data = {
        "S": {f"{t:g}": q.S(t).tolist() for t in ORACLE_TIMES},
        "strict_certificate": strict_cert.model_dump(),
        "strict_constants": per_tau,
        "quadratic_certificate": quad_cert.model_dump(),
        "quadratic_constants": {"C_s": c_s, "C_u": c_u},
        "measured_constants": {"C_s": measured[0], "C_u": measured[1]},
        "local_bound": ctx.local_bound.model_dump(),
    }
    return merge_reports("lyapunov", reports, data=data, meta=ctx.meta())
