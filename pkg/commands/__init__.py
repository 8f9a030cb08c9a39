"""Command registry; each handler takes a ScenarioContext and returns a StageReport."""
from typing import Callable, Dict

from core.middleware import StageLoggingMiddleware
from core.response import StageReport
from services.pipeline import ScenarioContext

from commands import check, conjugate, dichotomy, lyapunov, manifold, split, validate

Handler = Callable[[ScenarioContext], StageReport]

COMMANDS: Dict[str, Handler] = {
    "validate": validate.run,
    "dichotomy": dichotomy.run,
    "lyapunov": lyapunov.run,
    "manifold": manifold.run,
    "split": split.run,
    "conjugate": conjugate.run,
    "check": check.run,
}


def run_command(name: str, ctx: ScenarioContext) -> StageReport:
    return StageLoggingMiddleware(name, COMMANDS[name])(ctx)
