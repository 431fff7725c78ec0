# Field Affinity Graphs
# Model-side (block distance <= 2) and trace-side (sliding window) affinity,
# plus the vector comparisons used to judge them

import json
import logging
import math
from collections import deque
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from scipy import stats

from .errors import DimensionMismatchError, InputError, ModelFormatError
from .markov import transition_matrix
from .models import (
    SCALAR_TYPE,
    AccessEvent,
    AffinityComparison,
    AffinityGraph,
    AffinityWeighting,
    ComparisonRow,
    HistogramBin,
    MarkovChain,
    Trace,
)

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = 8
SIGNIFICANCE_LEVEL = 0.05
HISTOGRAM_WIDTH = 0.1

Pair = Tuple[str, str]


def _require_field(class_name: str, nodes: Sequence[str], field_name: str) -> None:
    if field_name not in nodes:
        raise InputError(f"class '{class_name}' declares no field '{field_name}'")


def _canonical_pair(nodes: Sequence[str], a: str, b: str) -> Pair:
    return (a, b) if nodes.index(a) < nodes.index(b) else (b, a)


def _graph(class_name: str, nodes: Sequence[str], weights: Dict[Pair, float]) -> AffinityGraph:
    return AffinityGraph(class_name=class_name, nodes=tuple(nodes),
                         weights={pair: w for pair, w in weights.items() if w > 0.0})


def model_affinity(chains: Iterable[MarkovChain], class_name: str,
                   class_fields: Mapping[str, Sequence[str]],
                   weighting: AffinityWeighting = AffinityWeighting.PROBABILITY
                   ) -> AffinityGraph:
    """Sum distance-0/1/2 co-access contributions over every method model"""
    if class_name not in class_fields:
        raise InputError(f"unknown class '{class_name}'")
    nodes = list(class_fields[class_name])
    weights: Dict[Pair, float] = {}

    def add(a: str, b: str, amount: float) -> None:
        if a == b or amount <= 0.0:
            return
        pair = _canonical_pair(nodes, a, b)
        weights[pair] = weights.get(pair, 0.0) + amount

    for chain in chains:
        ids, matrix = transition_matrix(chain)
        if weighting == AffinityWeighting.UNIFORM:
            matrix = (matrix > 0.0).astype(float)
        reach = matrix + matrix @ matrix
        fields_in = [[a.field_name for a in chain.states[sid].accesses
                      if a.class_name == class_name] for sid in ids]
        for here in fields_in:
            for field_name in here:
                _require_field(class_name, nodes, field_name)
            for i in range(len(here)):
                for j in range(i + 1, len(here)):
                    add(here[i], here[j], 1.0)

        for u, source in enumerate(fields_in):
            if not source:
                continue
            for v, target in enumerate(fields_in):
                if not target or reach[u, v] <= 0.0:
                    continue
                for a in source:
                    for b in target:
                        add(a, b, float(reach[u, v]))

    return _graph(class_name, nodes, weights)


def trace_affinity(trace: Trace, relevant_classes: Mapping[str, Sequence[str]],
                   window: int = DEFAULT_WINDOW,
                   reference_fields_only: bool = False) -> Dict[str, AffinityGraph]:
    """Count co-occurring field pairs of each relevant class within a sliding window"""
    if window < 2:
        raise InputError("window must be at least 2")
    weights: Dict[str, Dict[Pair, float]] = {name: {} for name in relevant_classes}
    recent: deque = deque(maxlen=window - 1)

    for event in trace.events:
        if not isinstance(event, AccessEvent):
            continue
        if reference_fields_only and event.value_type == SCALAR_TYPE:
            continue
        if event.class_name in weights:
            nodes = relevant_classes[event.class_name]
            _require_field(event.class_name, nodes, event.field_name)
            table = weights[event.class_name]
            for class_name, field_name in recent:
                if class_name == event.class_name and field_name != event.field_name:
                    pair = _canonical_pair(nodes, field_name, event.field_name)
                    table[pair] = table.get(pair, 0.0) + 1.0
        recent.append((event.class_name, event.field_name))

    return {name: _graph(name, relevant_classes[name], table)
            for name, table in weights.items()}


def vectorize(graph: AffinityGraph) -> np.ndarray:
    """Upper-triangle pair weights in row-major node order"""
    nodes = graph.nodes
    return np.array([graph.weight(nodes[i], nodes[j])
                     for i in range(len(nodes)) for j in range(i + 1, len(nodes))],
                    dtype=float)


def cosine(u: Sequence[float], v: Sequence[float]) -> Optional[float]:
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise DimensionMismatchError(f"cannot compare vectors of sizes {u.size} and {v.size}")
    norm = float(np.linalg.norm(u)) * float(np.linalg.norm(v))
    if norm == 0.0:
        return None
    # affinity weights are non-negative; rounding must not leave [0, 1]
    return max(0.0, min(1.0, float(np.dot(u, v)) / norm))


def spearman(u: Sequence[float], v: Sequence[float]) -> Optional[Tuple[float, float]]:
    """Average-rank Spearman coefficient with a two-sided t-approximation p-value"""
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise DimensionMismatchError(f"cannot compare vectors of sizes {u.size} and {v.size}")
    n = u.size
    if n < 3:
        return None
    du = stats.rankdata(u) - (n + 1) / 2.0
    dv = stats.rankdata(v) - (n + 1) / 2.0
    suu, svv = float(np.dot(du, du)), float(np.dot(dv, dv))
    if suu == 0.0 or svv == 0.0:
        return None
    rho = max(-1.0, min(1.0, float(np.dot(du, dv)) / math.sqrt(suu * svv)))
    if abs(rho) == 1.0:
        return rho, 0.0
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    p_value = float(min(1.0, 2.0 * stats.t.sf(abs(t), n - 2)))
    return rho, p_value


def _histogram(values: List[float], low: float, high: float) -> List[HistogramBin]:
    bins = int(round((high - low) / HISTOGRAM_WIDTH))
    edges = np.linspace(low, high, bins + 1)
    counts, _ = np.histogram(np.asarray(values, dtype=float), bins=edges)
    return [HistogramBin(low=round(float(edges[k]), 10), high=round(float(edges[k + 1]), 10),
                         count=int(counts[k])) for k in range(bins)]


def compare_affinity(model_graphs: Mapping[str, AffinityGraph],
                     trace_graphs: Mapping[str, AffinityGraph]) -> AffinityComparison:
    """Cosine and Spearman similarity for every class present on both sides"""
    rows: List[ComparisonRow] = []
    for class_name in sorted(set(model_graphs) & set(trace_graphs)):
        model_vec = vectorize(model_graphs[class_name])
        trace_vec = vectorize(trace_graphs[class_name])
        cos = cosine(model_vec, trace_vec)
        rank = spearman(model_vec, trace_vec)
        rho, p_value = rank if rank is not None else (None, None)
        rows.append(ComparisonRow(
            class_name=class_name,
            cosine=cos,
            spearman_rho=rho,
            p_value=p_value,
            significant=p_value is not None and p_value <= SIGNIFICANCE_LEVEL,
        ))

    uncompared = sorted(set(model_graphs) ^ set(trace_graphs))
    if uncompared:
        logger.info("Classes present on one side only: %s", ", ".join(uncompared))
    return AffinityComparison(
        rows=tuple(rows),
        uncompared=tuple(uncompared),
        cosine_histogram=tuple(_histogram(
            [r.cosine for r in rows if r.cosine is not None], 0.0, 1.0)),
        spearman_histogram=tuple(_histogram(
            [r.spearman_rho for r in rows if r.significant], -1.0, 1.0)),
    )


# ---------------------------------------------------------------------------
# JSON documents: {"class", "fields", "weights": [{"a", "b", "w"}]}
# ---------------------------------------------------------------------------

class PairDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")
    a: str
    b: str
    w: float = Field(ge=0.0)


class AffinityDocument(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)
    class_name: str = Field(alias="class")
    fields: List[str]
    weights: List[PairDocument]


def affinity_to_json(graph: AffinityGraph) -> str:
    document = {
        "class": graph.class_name,
        "fields": list(graph.nodes),
        "weights": [{"a": a, "b": b, "w": float(w)}
                    for (a, b), w in sorted(graph.weights.items(),
                                            key=lambda kv: (graph.nodes.index(kv[0][0]),
                                                            graph.nodes.index(kv[0][1])))],
    }
    return json.dumps(document, indent=2) + "\n"


def affinity_from_json(text: str) -> AffinityGraph:
    try:
        document = AffinityDocument.model_validate(json.loads(text))
    except (json.JSONDecodeError, ValidationError) as exc:
        raise ModelFormatError(f"malformed affinity document: {exc}") from exc
    nodes = list(document.fields)
    weights: Dict[Pair, float] = {}
    for entry in document.weights:
        if entry.a not in nodes or entry.b not in nodes or entry.a == entry.b:
            raise ModelFormatError(
                f"{document.class_name}: pair {entry.a}/{entry.b} is not a pair of its fields")
        pair = _canonical_pair(nodes, entry.a, entry.b)
        weights[pair] = weights.get(pair, 0.0) + entry.w
    return _graph(document.class_name, nodes, weights)
