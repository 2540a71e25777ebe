################################################################################
# Formatting - Functions that render reports and results as CSV and JSON
################################################################################


import csv
import io
import json
import logging
import math
from typing import Any, Iterable, List, Sequence

import numpy as np

from .baselines import BoundReport
from .knapsack import KnapsackSolution
from .svm import SvmSolution, margin_width

FLOAT_FORMAT = "{:.12g}"

logger = logging.getLogger("ccb")
logger.setLevel(logging.CRITICAL)  # Start with logging disabled


def format_value(value) -> str:
    """Render one CSV cell: None is empty, floats use 12 significant digits."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return FLOAT_FORMAT.format(value)
    return str(value)


def render_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """CSV text with "\\n" line endings."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(cell) for cell in row])
    return buffer.getvalue()


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"cannot serialise {type(value).__name__}")


def render_json(document: Any) -> str:
    return json.dumps(document, indent=2, default=_json_default) + "\n"


################################################################################
# Reports
################################################################################

BOUND_HEADER = ["method", "log_bound", "confidence", "seconds"]
KNAPSACK_HEADER = ["Instance", "Formulation", "Objective", "Prob", "Certificate", "z", "Cuts", "Nodes", "Time"]
SVM_HEADER = ["method", "status", "objective", "margin", "score", "w0", "w", "time"]


def bound_rows(reports: List[BoundReport], record_time: bool = True) -> List[List[Any]]:
    return [
        [r.method, r.log_prob_bound, r.confidence_bound, r.wall_time if record_time else None]
        for r in reports
    ]


def knapsack_row(name: str, solution: KnapsackSolution, record_time: bool = True) -> List[Any]:
    """One results-table style row; Prob is in percent."""
    return [
        name,
        solution.formulation,
        solution.objective,
        100.0 * solution.probability,
        solution.certificate,
        solution.z,
        solution.cuts_added,
        solution.nodes,
        solution.wall_time if record_time else None,
    ]


def svm_row(solution: SvmSolution, score=None, record_time: bool = True) -> List[Any]:
    return [
        solution.method,
        solution.status,
        solution.objective,
        margin_width(solution),
        score,
        solution.w0,
        " ".join(format_value(v) for v in solution.w),
        solution.wall_time if record_time else None,
    ]
