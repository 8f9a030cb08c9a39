"""check: every stage on one scenario, merged into a single report."""
from core.middleware import StageLoggingMiddleware
from core.response import StageReport, merge_reports
from services.pipeline import ScenarioContext

from commands import conjugate, dichotomy, lyapunov, manifold, split, validate

STAGES = (
    ("validate", validate.run),
    ("dichotomy", dichotomy.run),
    ("lyapunov", lyapunov.run),
    ("manifold", manifold.run),
    ("split", split.run),
    ("conjugate", conjugate.run),
)


def run(ctx: ScenarioContext) -> StageReport:
    reports = [StageLoggingMiddleware(name, handler)(ctx) for name, handler in STAGES]
    return merge_reports("check", reports, meta=ctx.meta())
