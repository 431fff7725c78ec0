# Report Writer
# CSV reports, each opened by a `# config {json}` line describing the run

import csv
import io
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

from pydantic import ValidationError

from ..errors import InputError
from ..models import (
    AffinityComparison,
    CorrelationReport,
    HistogramBin,
    MethodValidation,
    MetricSummary,
)
from .file_store import PathLike, atomic_write_text, read_text

logger = logging.getLogger(__name__)

CONFIG_PREFIX = "# config "

VALIDATION_COLUMNS = ["method", "calls_evaluated", "termination_rate", "oo_match_rate",
                      "method_size", "num_accesses", "capped_invocations"]
VALIDATION_DETAIL_COLUMNS = ["method", "calls_evaluated", "mean_invocation_match_rate",
                             "matched", "skipped", "capped_invocations",
                             "discarded_invocations"]
CORRELATION_COLUMNS = ["label", "methods", "cot", "ctn", "con", "cts", "cos"]
CORRELATION_DETAIL_COLUMNS = ["label", "coefficient", "rho", "p_value", "excluded"]
SUMMARY_COLUMNS = ["metric", "mean", "median", "q1", "q3"]
COMPARISON_COLUMNS = ["class", "cosine", "spearman", "p_value", "significant"]
HISTOGRAM_COLUMNS = ["bin_low", "bin_high", "count"]
UNCOMPARED_COLUMNS = ["class"]


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_csv(columns: Sequence[str], rows: Iterable[Dict[str, object]],
               config_header: Optional[str] = None) -> str:
    buffer = io.StringIO()
    if config_header is not None:
        buffer.write(CONFIG_PREFIX + config_header + "\n")
    writer = csv.DictWriter(buffer, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: format_cell(row.get(k)) for k in columns})
    return buffer.getvalue()


def write_csv(path: PathLike, columns: Sequence[str], rows: Iterable[Dict[str, object]],
              config_header: Optional[str] = None) -> Path:
    target = atomic_write_text(path, render_csv(columns, rows, config_header))
    logger.info("Wrote %s", target)
    return target


def read_csv(path: PathLike, required: Sequence[str]) -> List[Dict[str, str]]:
    """Rows of a report CSV, skipping `#` comment lines"""
    text = read_text(path, "report")
    lines = [line for line in text.splitlines() if not line.startswith("#")]
    reader = csv.DictReader(lines)
    missing = [c for c in required if c not in (reader.fieldnames or [])]
    if missing:
        raise InputError(f"{path}: missing column(s) {', '.join(missing)}")
    return list(reader)


# ---------------------------------------------------------------------------
# Validation reports
# ---------------------------------------------------------------------------

def write_validation(path: PathLike, rows: Sequence[MethodValidation],
                     config_header: Optional[str] = None) -> Path:
    return write_csv(path, VALIDATION_COLUMNS,
                     (r.model_dump() for r in rows), config_header)


def write_validation_detail(path: PathLike, rows: Sequence[MethodValidation],
                            config_header: Optional[str] = None) -> Path:
    return write_csv(path, VALIDATION_DETAIL_COLUMNS,
                     (r.model_dump() for r in rows), config_header)


def _optional_float(text: str) -> Optional[float]:
    return float(text) if text.strip() else None


def read_validation(path: PathLike) -> List[MethodValidation]:
    rows = []
    for number, raw in enumerate(read_csv(path, VALIDATION_COLUMNS), start=1):
        try:
            rows.append(MethodValidation(
                method=raw["method"],
                calls_evaluated=int(raw["calls_evaluated"]),
                termination_rate=_optional_float(raw["termination_rate"]),
                oo_match_rate=_optional_float(raw["oo_match_rate"]),
                method_size=int(raw["method_size"]),
                num_accesses=int(raw["num_accesses"]),
                capped_invocations=int(raw["capped_invocations"]),
            ))
        except (ValueError, ValidationError) as exc:
            raise InputError(f"{path}: bad validation row {number}: {exc}") from exc
    return rows


# ---------------------------------------------------------------------------
# Statistics reports
# ---------------------------------------------------------------------------

_COEFFICIENTS = ("cot", "ctn", "con", "cts", "cos")


def write_correlation(path: PathLike, reports: Sequence[CorrelationReport],
                      config_header: Optional[str] = None) -> Path:
    rows = []
    for report in reports:
        row: Dict[str, object] = {"label": report.label, "methods": report.methods}
        for name in _COEFFICIENTS:
            value = getattr(report, name)
            row[name] = value.rho if value is not None else None
        rows.append(row)
    return write_csv(path, CORRELATION_COLUMNS, rows, config_header)


def write_correlation_detail(path: PathLike, reports: Sequence[CorrelationReport],
                             config_header: Optional[str] = None) -> Path:
    rows = []
    for report in reports:
        for name in _COEFFICIENTS:
            value = getattr(report, name)
            rows.append({"label": report.label, "coefficient": name,
                         "rho": value.rho if value else None,
                         "p_value": value.p_value if value else None,
                         "excluded": report.excluded})
    return write_csv(path, CORRELATION_DETAIL_COLUMNS, rows, config_header)


def write_summary(path: PathLike, summaries: Sequence[MetricSummary],
                  config_header: Optional[str] = None) -> Path:
    return write_csv(path, SUMMARY_COLUMNS, (s.model_dump() for s in summaries), config_header)


# ---------------------------------------------------------------------------
# Affinity comparison reports
# ---------------------------------------------------------------------------

def write_comparison(path: PathLike, comparison: AffinityComparison,
                     config_header: Optional[str] = None) -> Path:
    rows = [{"class": r.class_name, "cosine": r.cosine, "spearman": r.spearman_rho,
             "p_value": r.p_value, "significant": r.significant} for r in comparison.rows]
    return write_csv(path, COMPARISON_COLUMNS, rows, config_header)


def write_uncompared(path: PathLike, comparison: AffinityComparison,
                     config_header: Optional[str] = None) -> Path:
    """Classes with a graph on only one side of the comparison"""
    return write_csv(path, UNCOMPARED_COLUMNS,
                     ({"class": name} for name in comparison.uncompared), config_header)


def write_histogram(path: PathLike, bins: Sequence[HistogramBin],
                    config_header: Optional[str] = None) -> Path:
    rows = [{"bin_low": b.low, "bin_high": b.high, "count": b.count} for b in bins]
    return write_csv(path, HISTOGRAM_COLUMNS, rows, config_header)
