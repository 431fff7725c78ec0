# Method-Level Correlation Statistics
# Spearman correlations between validation metrics and distribution summaries

import logging
from typing import Dict, List, Optional, Sequence

import numpy as np

from .affinity import spearman
from .errors import InputError
from .models import Correlation, CorrelationReport, MethodValidation, MetricSummary

logger = logging.getLogger(__name__)

# column pairs of the correlation table
PAIRS: Dict[str, tuple] = {
    "cot": ("oo_match_rate", "termination_rate"),
    "ctn": ("termination_rate", "num_accesses"),
    "con": ("oo_match_rate", "num_accesses"),
    "cts": ("termination_rate", "method_size"),
    "cos": ("oo_match_rate", "method_size"),
}

SUMMARY_METRICS = ("termination_rate", "oo_match_rate", "method_size", "num_accesses")


def _eligible(rows: Sequence[MethodValidation], min_calls: int) -> List[MethodValidation]:
    threshold = max(1, min_calls)
    return [row for row in rows if row.calls_evaluated >= threshold]


def _correlate(rows: Sequence[MethodValidation], left: str, right: str) -> Optional[Correlation]:
    pairs = [(getattr(r, left), getattr(r, right)) for r in rows
             if getattr(r, left) is not None and getattr(r, right) is not None]
    result = spearman([float(p[0]) for p in pairs], [float(p[1]) for p in pairs])
    if result is None:
        return None
    return Correlation(rho=result[0], p_value=result[1])


def correlation_report(rows: Sequence[MethodValidation], label: str,
                       min_calls: int = 0) -> CorrelationReport:
    """Spearman coefficient of every metric pair over evaluated methods"""
    if not rows:
        raise InputError("correlation report needs at least one validation row")
    # sorted so the report does not depend on row order
    ordered = sorted(rows, key=lambda r: r.method)
    included = _eligible(ordered, min_calls)
    excluded = len(ordered) - len(included)
    if excluded:
        logger.info("%s: %d method(s) excluded below %d evaluated call(s)",
                    label, excluded, max(1, min_calls))

    coefficients = {name: _correlate(included, left, right)
                    for name, (left, right) in PAIRS.items()}
    return CorrelationReport(label=label, methods=len(included), excluded=excluded,
                             **coefficients)


def summarize(rows: Sequence[MethodValidation], min_calls: int = 0) -> List[MetricSummary]:
    """Quartile summary of each metric over evaluated methods"""
    if not rows:
        raise InputError("summary needs at least one validation row")
    included = _eligible(rows, min_calls)
    summaries = []
    for metric in SUMMARY_METRICS:
        values = np.array([getattr(r, metric) for r in included
                           if getattr(r, metric) is not None], dtype=float)
        if values.size == 0:
            summaries.append(MetricSummary(metric=metric))
            continue
        q1, median, q3 = np.percentile(values, [25, 50, 75])
        summaries.append(MetricSummary(metric=metric, mean=float(values.mean()),
                                       median=float(median), q1=float(q1), q3=float(q3)))
    return summaries
