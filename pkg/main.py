import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from commands import COMMANDS, run_command
from core.config import settings
from core.exceptions import EXIT_CHECK_FAILED, EXIT_INPUT_ERROR, EXIT_OK, BaseCustomException
from core.response import error_report
from services.artifacts import failure_lines, write_artifacts, write_report
from services.pipeline import load_scenario

logger = logging.getLogger(__name__)


def _parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="nudich",
        description="Certify nonuniform dichotomies, build Lyapunov functions and check the linearization "
                    "of a perturbed nonautonomous system."
    )
    parser.add_argument("command", choices=list(COMMANDS), help="pipeline stage to run")
    parser.add_argument("--scenario", type=Path, required=True, help="scenario JSON file")
    parser.add_argument("--out", type=Path, default=None, help="output directory for reports and CSV tables")
    parser.add_argument("--seed", type=int, default=None, help="seed of every randomized sampler (u64)")
    parser.add_argument("--tol-scale", dest="tol_scale", type=float, default=1.0,
                        help="factor applied to all solver tolerances and check thresholds")
    parser.add_argument("--log-level", dest="log_level", default=settings.LOG_LEVEL)
    return parser.parse_args(argv)


def _abort(stage: str, out_dir: Path, message: str, exit_code: int, error_code: str, details=None) -> int:
    """Write the error report in the same envelope as stage reports and return the exit code."""
    report = error_report(stage=stage, message=message, exit_code=exit_code, error_code=error_code, details=details)
    try:
        write_report(report, out_dir)
    except OSError as e:
        logger.error(f"Could not write error report to {out_dir}: {e}")
    print(f"{stage}: {message}", file=sys.stderr)
    return exit_code


def main(argv: Optional[List[str]] = None) -> int:
    args = _parse_args(argv)
    logging.basicConfig(
        level=args.log_level.upper(),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    stage = args.command
    out_dir = args.out or Path(settings.OUTPUT_DIR)

    try:
        ctx = load_scenario(args.scenario, seed=args.seed, tol_scale=args.tol_scale, out=args.out,
                            require_seed=stage == "check")
        out_dir = ctx.out_dir
        report = run_command(stage, ctx)
        write_artifacts(report, out_dir)
    except BaseCustomException as exc:
        logger.error(f"{stage} aborted with {exc.__class__.__name__}: {exc.message}")
        ref = exc.details.get("ref")
        message = f"{ref} failed: {exc.message}" if ref else exc.message
        return _abort(stage, out_dir, message, exc.exit_code, exc.__class__.__name__, exc.details)
    except ValidationError as exc:
        logger.error(f"{stage}: scenario validation failed: {exc}")
        errors = [
            {"field": ".".join(str(x) for x in error["loc"]), "message": error["msg"], "type": error["type"]}
            for error in exc.errors()
        ]
        return _abort(stage, out_dir, "scenario validation failed", EXIT_INPUT_ERROR, "VALIDATION_ERROR",
                      {"errors": errors})
    except OSError as exc:
        logger.error(f"{stage}: cannot write artifacts: {exc}")
        return _abort(stage, out_dir, f"cannot write artifacts: {exc}", EXIT_INPUT_ERROR, "OS_ERROR")
    except Exception as exc:
        logger.error(f"{stage}: unexpected error: {exc}", exc_info=True)
        return _abort(stage, out_dir, f"unexpected error: {exc}", EXIT_CHECK_FAILED, "INTERNAL_ERROR")

    if not report.success:
        for line in failure_lines(report):
            print(line, file=sys.stderr)
        return EXIT_CHECK_FAILED
    print(report.message)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
