import math
import random

import numpy as np
import pytest
from scipy import stats as scipy_stats

from conftest import make_chain
from oopredictor.affinity import (
    affinity_from_json,
    affinity_to_json,
    compare_affinity,
    cosine,
    model_affinity,
    spearman,
    trace_affinity,
    vectorize,
)
from oopredictor.cfg import build_cfg, edge_weights
from oopredictor.errors import DimensionMismatchError, InputError, ModelFormatError
from oopredictor.interp import execute
from oopredictor.markov import build_chain, compress
from oopredictor.models import AccessEvent, AffinityGraph, AffinityWeighting, Trace


def _models(program):
    chains = []
    for method in program.methods:
        cfg = build_cfg(method)
        chains.append(compress(build_chain(cfg, edge_weights(cfg), method, program)))
    return chains


def _trace(*fields, class_name="A"):
    return Trace(events=[AccessEvent("getfield", class_name, f, "int", "T.m", 0)
                         for f in fields])


# ---------------------------------------------------------------------------
# model affinity
# ---------------------------------------------------------------------------

def test_same_state_pairs(straight_program):
    graph = model_affinity(_models(straight_program), "A", straight_program.class_fields())
    # accesses x y z x: each distinct-field pair of positions counts once
    assert graph.weights == {("x", "y"): 2.0, ("x", "z"): 2.0, ("y", "z"): 1.0}


def test_one_step_pairs_use_transition_probability(diamond_program):
    chains = _models(diamond_program)
    classes = diamond_program.class_fields()
    assert model_affinity(chains, "A", classes).weight("x", "y") == pytest.approx(1.0)
    uniform = model_affinity(chains, "A", classes, AffinityWeighting.UNIFORM)
    assert uniform.weight("y", "x") == pytest.approx(2.0)


def test_pairs_three_blocks_apart_get_nothing(chain_program):
    graph = model_affinity(_models(chain_program), "A", chain_program.class_fields())
    assert graph.weight("a", "d") == 0.0
    assert graph.weight("a", "b") == pytest.approx(1.0)
    assert graph.weight("a", "c") == pytest.approx(1.0)
    assert graph.weight("b", "d") == pytest.approx(1.0)


def test_two_step_contribution_sums_paths():
    chain = make_chain({
        0: (["a"], {1: 0.5, 2: 0.5}),
        1: (["m"], {3: 1.0}),
        2: (["n"], {3: 1.0}),
        3: (["b"], {4: 1.0}),
        4: ([], {}),
    })
    classes = {"A": ["a", "b", "m", "n"]}
    graph = model_affinity([chain], "A", classes)
    assert graph.weight("a", "b") == pytest.approx(1.0)
    assert graph.weight("a", "m") == pytest.approx(0.5)


def test_model_affinity_unknown_class(straight_program):
    with pytest.raises(InputError):
        model_affinity(_models(straight_program), "Nope", straight_program.class_fields())


def test_graph_nodes_are_declared_fields(calls_program):
    graph = model_affinity(_models(calls_program), "Node", calls_program.class_fields())
    assert graph.nodes == ("value", "next")
    assert all(w >= 0 for w in graph.weights.values())


# ---------------------------------------------------------------------------
# trace affinity
# ---------------------------------------------------------------------------

def test_window_two_counts_adjacent_pairs():
    graphs = trace_affinity(_trace("x", "y", "x"), {"A": ["x", "y"]}, window=2)
    assert graphs["A"].weight("x", "y") == 2.0


def test_large_window_sees_every_pair():
    graphs = trace_affinity(_trace("x", "y", "z"), {"A": ["x", "y", "z"]}, window=8)
    assert set(graphs["A"].weights) == {("x", "y"), ("x", "z"), ("y", "z")}


def test_window_is_monotone():
    rng = random.Random(5)
    fields = [rng.choice("abcd") for _ in range(60)]
    classes = {"A": ["a", "b", "c", "d"]}
    previous = None
    for window in range(2, 12):
        current = vectorize(trace_affinity(_trace(*fields), classes, window)["A"])
        if previous is not None:
            assert np.all(current >= previous)
        previous = current


def test_other_classes_are_ignored_but_occupy_the_window():
    events = _trace("x").events + _trace("q", class_name="B").events + _trace("y").events
    graphs = trace_affinity(Trace(events=events), {"A": ["x", "y"]}, window=2)
    assert graphs["A"].weights == {}
    graphs = trace_affinity(Trace(events=events), {"A": ["x", "y"]}, window=3)
    assert graphs["A"].weight("x", "y") == 1.0


def test_window_below_two_is_rejected():
    with pytest.raises(InputError):
        trace_affinity(_trace("x"), {"A": ["x"]}, window=1)


def test_undeclared_trace_field_is_an_input_error():
    with pytest.raises(InputError, match="class 'A' declares no field 'w'"):
        trace_affinity(_trace("x", "w"), {"A": ["x", "y"]}, window=2)


def test_undeclared_model_field_is_an_input_error(straight_program):
    with pytest.raises(InputError, match="declares no field 'z'"):
        model_affinity(_models(straight_program), "A", {"A": ["x", "y"]})


def test_model_and_trace_agree_on_straight_program(straight_program):
    model = model_affinity(_models(straight_program), "A", straight_program.class_fields())
    traced = trace_affinity(execute(straight_program), {"A": ["x", "y", "z"]}, window=8)
    assert cosine(vectorize(model), vectorize(traced["A"])) == pytest.approx(1.0, abs=1e-9)


# ---------------------------------------------------------------------------
# vectors and similarity
# ---------------------------------------------------------------------------

def test_vectorize_uses_upper_triangle_order():
    graph = AffinityGraph(class_name="A", nodes=("a", "b", "c"),
                          weights={("a", "c"): 2.0, ("b", "c"): 3.0})
    assert vectorize(graph).tolist() == [0.0, 2.0, 3.0]


def test_cosine_values():
    assert cosine([1, 1, 0], [1, 0, 0]) == pytest.approx(0.70710678, abs=1e-8)
    assert cosine([2, 4], [1, 2]) == pytest.approx(1.0)
    assert cosine([0, 0], [1, 2]) is None


def test_cosine_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        cosine([1, 2], [1, 2, 3])


def test_cosine_stays_within_unit_interval():
    assert cosine([1, 1, 1], [1, 1, 1]) == 1.0
    rng = np.random.default_rng(4)
    for _ in range(200):
        u = rng.random(rng.integers(1, 12))
        assert 0.0 <= cosine(u, u) <= 1.0


def test_cosine_is_scale_invariant():
    rng = np.random.default_rng(21)
    for _ in range(100):
        u, v = rng.random(8), rng.random(8)
        alpha = float(rng.uniform(0.01, 1000.0))
        assert abs(cosine(alpha * u, v) - cosine(u, v)) <= 1e-12


def test_spearman_exact_for_monotone_inputs():
    assert spearman([1, 2, 3, 4], [10, 20, 30, 40]) == (1.0, 0.0)
    assert spearman([1, 2, 3, 4], [4, 3, 2, 1]) == (-1.0, 0.0)


def test_spearman_degenerate_inputs():
    assert spearman([1, 2], [2, 1]) is None
    assert spearman([1, 1, 1], [1, 2, 3]) is None


def _average_ranks(values):
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        for k in range(i, j + 1):
            ranks[order[k]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _pearson(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def test_spearman_matches_brute_force_with_ties():
    rng = random.Random(1234)
    checked = 0
    for _ in range(1000):
        n = rng.randint(3, 20)
        u = [rng.randint(0, 6) for _ in range(n)]
        v = [rng.randint(0, 6) for _ in range(n)]
        result = spearman(u, v)
        if len(set(u)) == 1 or len(set(v)) == 1:
            assert result is None
            continue
        expected = _pearson(_average_ranks(u), _average_ranks(v))
        assert result[0] == pytest.approx(expected, abs=1e-9)
        checked += 1
    assert checked > 900


def test_spearman_with_tied_ranks():
    rho, _ = spearman([1, 2, 2, 4], [2, 1, 3, 4])
    expected = _pearson(_average_ranks([1, 2, 2, 4]), _average_ranks([2, 1, 3, 4]))
    assert rho == pytest.approx(expected, abs=1e-9)
    assert rho == pytest.approx(3.0 / math.sqrt(22.5), abs=1e-9)


def test_spearman_ignores_increasing_transforms():
    rng = np.random.default_rng(33)
    for _ in range(50):
        u, v = rng.normal(size=15), rng.normal(size=15)
        rho, _ = spearman(u, v)
        for transform in (np.exp, lambda x: 3.0 * x + 7.0, lambda x: x ** 3):
            assert abs(spearman(transform(u), v)[0] - rho) <= 1e-12


def test_spearman_p_value_matches_t_approximation():
    rng = np.random.default_rng(9)
    for _ in range(50):
        u, v = rng.normal(size=12), rng.normal(size=12)
        rho, p_value = spearman(u, v)
        reference = scipy_stats.spearmanr(u, v)
        assert rho == pytest.approx(reference[0], abs=1e-9)
        assert p_value == pytest.approx(reference[1], abs=1e-9)


# ---------------------------------------------------------------------------
# comparison and documents
# ---------------------------------------------------------------------------

def _graph(name, weights, nodes=("a", "b", "c", "d")):
    return AffinityGraph(class_name=name, nodes=nodes, weights=weights)


def test_identical_graphs_compare_perfectly():
    graph = _graph("A", {("a", "b"): 1.0, ("a", "c"): 2.0, ("b", "d"): 5.0, ("c", "d"): 0.5})
    comparison = compare_affinity({"A": graph}, {"A": graph})
    (row,) = comparison.rows
    assert row.cosine == pytest.approx(1.0)
    assert row.spearman_rho == pytest.approx(1.0)
    assert row.significant
    assert comparison.cosine_histogram[-1].count == 1
    assert comparison.spearman_histogram[-1].count == 1


def test_identical_uniform_graphs_land_in_the_top_cosine_bin():
    graph = _graph("A", {("a", "b"): 1.0, ("a", "c"): 1.0, ("b", "c"): 1.0},
                   nodes=("a", "b", "c"))
    comparison = compare_affinity({"A": graph}, {"A": graph})
    (row,) = comparison.rows
    assert row.cosine == 1.0
    assert sum(b.count for b in comparison.cosine_histogram) == 1
    assert comparison.cosine_histogram[-1].count == 1


def test_histogram_bins():
    comparison = compare_affinity({}, {})
    assert len(comparison.cosine_histogram) == 10
    assert len(comparison.spearman_histogram) == 20
    assert comparison.cosine_histogram[0].low == 0.0
    assert comparison.cosine_histogram[0].high == 0.1
    assert comparison.spearman_histogram[0].low == -1.0


def test_insignificant_rows_leave_the_spearman_histogram():
    model = _graph("A", {("a", "b"): 1.0, ("a", "c"): 2.0, ("a", "d"): 3.0})
    trace = _graph("A", {("a", "b"): 3.0, ("a", "c"): 1.0, ("a", "d"): 2.0, ("c", "d"): 1.0})
    comparison = compare_affinity({"A": model}, {"A": trace})
    (row,) = comparison.rows
    assert row.p_value > 0.05 and not row.significant
    assert sum(b.count for b in comparison.spearman_histogram) == 0
    assert sum(b.count for b in comparison.cosine_histogram) == 1


def test_classes_on_one_side_are_reported():
    graph = _graph("A", {("a", "b"): 1.0})
    comparison = compare_affinity({"A": graph, "B": _graph("B", {})}, {"A": graph})
    assert [r.class_name for r in comparison.rows] == ["A"]
    assert comparison.uncompared == ("B",)


def test_affinity_json_round_trip(calls_program):
    graph = model_affinity(_models(calls_program), "Node", calls_program.class_fields())
    text = affinity_to_json(graph)
    assert affinity_from_json(text) == graph
    assert affinity_to_json(affinity_from_json(text)) == text


def test_affinity_json_rejects_foreign_fields():
    text = '{"class": "A", "fields": ["a", "b"], "weights": [{"a": "a", "b": "z", "w": 1}]}'
    with pytest.raises(ModelFormatError):
        affinity_from_json(text)


def test_affinity_json_rejects_negative_weight():
    text = '{"class": "A", "fields": ["a", "b"], "weights": [{"a": "a", "b": "b", "w": -1}]}'
    with pytest.raises(ModelFormatError):
        affinity_from_json(text)
