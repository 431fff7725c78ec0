import random

import pytest

from oopredictor.affinity import spearman
from oopredictor.errors import InputError
from oopredictor.models import MethodValidation
from oopredictor.stats import correlation_report, summarize


def _row(name, calls=10, term=1.0, oo=1.0, size=10, accesses=3):
    return MethodValidation(method=name, calls_evaluated=calls, termination_rate=term,
                            oo_match_rate=oo, method_size=size, num_accesses=accesses)


def _rows():
    rng = random.Random(2)
    rows = []
    for k in range(12):
        rows.append(_row(f"M.m{k}", term=rng.random(), oo=rng.random(),
                         size=rng.randint(5, 90), accesses=rng.randint(1, 20)))
    return rows


def test_equal_columns_correlate_perfectly():
    rows = [_row(f"M.m{k}", term=v, oo=v) for k, v in enumerate([0.1, 0.5, 0.3, 0.9])]
    report = correlation_report(rows, "bench")
    assert report.cot.rho == 1.0
    assert report.methods == 4


def test_constant_column_gives_no_coefficient():
    rows = [_row(f"M.m{k}", term=0.5, accesses=k) for k in range(5)]
    report = correlation_report(rows, "bench")
    assert report.ctn is None and report.cts is None


def test_monotone_corpus_is_perfectly_anticorrelated():
    rows = [_row(f"M.m{k}", term=1.0 - k / 10, accesses=k + 1) for k in range(8)]
    assert correlation_report(rows, "bench").ctn.rho == -1.0


def test_coefficients_agree_with_spearman():
    rows = _rows()
    report = correlation_report(rows, "bench")
    expected = spearman([r.oo_match_rate for r in rows], [float(r.method_size) for r in rows])
    assert report.cos.rho == pytest.approx(expected[0], abs=1e-12)
    assert report.cos.p_value == pytest.approx(expected[1], abs=1e-12)


def test_report_is_permutation_invariant():
    rows = _rows()
    shuffled = list(rows)
    random.Random(8).shuffle(shuffled)
    assert correlation_report(rows, "x") == correlation_report(shuffled, "x")


def test_methods_without_calls_are_excluded():
    rows = _rows() + [MethodValidation(method="M.unused", calls_evaluated=0)]
    report = correlation_report(rows, "bench")
    assert report.methods == 12 and report.excluded == 1


def test_min_calls_filter():
    rows = [_row(f"M.m{k}", calls=k) for k in range(6)]
    report = correlation_report(rows, "bench", min_calls=3)
    assert report.methods == 3 and report.excluded == 3


def test_too_few_methods_give_no_coefficients():
    report = correlation_report([_row("M.a"), _row("M.b", term=0.2)], "bench")
    assert report.cot is None and report.methods == 2


def test_empty_rows_are_rejected():
    with pytest.raises(InputError):
        correlation_report([], "bench")
    with pytest.raises(InputError):
        summarize([])


def test_summary_quartiles():
    rows = [_row(f"M.m{k}", term=t, size=s)
            for k, (t, s) in enumerate([(0.0, 1), (0.25, 2), (0.5, 3), (0.75, 4), (1.0, 5)])]
    summaries = {s.metric: s for s in summarize(rows)}
    assert set(summaries) == {"termination_rate", "oo_match_rate", "method_size",
                              "num_accesses"}
    term = summaries["termination_rate"]
    assert (term.mean, term.median, term.q1, term.q3) == pytest.approx((0.5, 0.5, 0.25, 0.75))
    assert summaries["method_size"].median == 3.0


def test_summary_of_unevaluated_methods_is_empty():
    (term, *_rest) = summarize([MethodValidation(method="M.x")])
    assert term.metric == "termination_rate" and term.mean is None
