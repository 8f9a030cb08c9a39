"""
Report and plot-data writers.

Column order per kind:
    trajectory  t, x1, ..., xn
    v-trace     t, V, dV/dt
    defects     tau, t, defect
"""
import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from core.exceptions import ConfigurationError
from core.response import ErrorReport, StageReport

logger = logging.getLogger(__name__)

PLOT_KINDS = ("trajectory", "v-trace", "defects")
FIXED_COLUMNS = {
    "v-trace": ["t", "V", "dV/dt"],
    "defects": ["tau", "t", "defect"],
}

# check ref prefix -> module that owns the property
REF_MODULES = {
    "growth": "growth",
    "evolution": "linflow",
    "projection": "linflow",
    "dichotomy": "linflow",
    "growth_bound": "linflow",
    "perturbation": "nonlinear",
    "gronwall": "nonlinear",
    "quadratic": "lyapunov",
    "strict": "lyapunov",
    "lyapunov": "lyapunov",
    "hypothesis": "manifolds",
    "manifold": "manifolds",
    "foliation": "manifolds",
    "splitting": "splitting",
    "conjugacy": "conjugacy",
}


def module_of(ref: str) -> str:
    return REF_MODULES.get(ref.split(".", 1)[0], "cli")


def failure_lines(report: StageReport) -> List[str]:
    return [
        f"{module_of(c.ref)}: {c.ref} failed ({c.name}, worst margin {c.worst_margin})"
        for c in report.failed_checks()
    ]


def _dump(report: Union[StageReport, ErrorReport]) -> str:
    return json.dumps(report.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"


def write_report(report: Union[StageReport, ErrorReport], out_dir: Path) -> Path:
    """Write <stage>.json; keys are sorted so equal reports are equal bytes."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{report.stage}.json"
    path.write_text(_dump(report), encoding="utf-8")
    logger.info(f"Report written to {path}")
    return path


def columns(kind: str, rows: List[Dict[str, Any]], n: Optional[int] = None) -> List[str]:
    if kind not in PLOT_KINDS:
        raise ConfigurationError(f"unknown plot data kind '{kind}'", details={"kinds": list(PLOT_KINDS)})
    if kind in FIXED_COLUMNS:
        return FIXED_COLUMNS[kind]
    if n is None:
        n = max((len(r) - 1 for r in rows), default=0)
    return ["t"] + [f"x{i}" for i in range(1, n + 1)]


def emit_plot_data(report: StageReport, kind: str, path: Path) -> Path:
    """Write one table of the report as CSV; a report without rows gives a header-only file."""
    rows = report.tables.get(kind, []) if kind in PLOT_KINDS else []
    header = columns(kind, rows, report.meta.get("n"))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([row.get(c, "") for c in header])
    logger.debug(f"{len(rows)} {kind} rows written to {path}")
    return path


def write_artifacts(report: StageReport, out_dir: Path) -> List[Path]:
    """JSON report plus one CSV per plot table it carries."""
    out_dir = Path(out_dir)
    paths = [write_report(report, out_dir)]
    for kind in PLOT_KINDS:
        if kind in report.tables:
            paths.append(emit_plot_data(report, kind, out_dir / f"{report.stage}-{kind}.csv"))
    return paths
