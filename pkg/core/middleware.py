"""
Stage wrapper for logging and timing of command runs
"""
import time
import uuid
import logging
from typing import Callable

from core.exceptions import BaseCustomException
from core.response import StageReport

logger = logging.getLogger(__name__)


class StageLoggingMiddleware:
    """Wrap a command handler to log its start, outcome and duration"""

    def __init__(self, stage: str, handler: Callable[..., StageReport]):
        self.stage = stage
        self.handler = handler

    def __call__(self, *args, **kwargs) -> StageReport:
        run_id = uuid.uuid4().hex[:8]
        start_time = time.perf_counter()
        logger.info(f"Stage {run_id}: {self.stage} started")

        try:
            report = self.handler(*args, **kwargs)
        except BaseCustomException as e:
            process_time = time.perf_counter() - start_time
            logger.error(
                f"Stage {run_id} aborted: {e.__class__.__name__}: {e.message} - "
                f"Time: {process_time:.3f}s"
            )
            raise

        process_time = time.perf_counter() - start_time
        for check in report.failed_checks():
            logger.warning(f"Stage {run_id}: {self.stage}: {check.ref} failed (worst margin {check.worst_margin})")
        logger.info(
            f"Stage {run_id}: {self.stage} {'passed' if report.success else 'failed'} - "
            f"{len(report.checks)} checks - Time: {process_time:.3f}s"
        )
        return report
