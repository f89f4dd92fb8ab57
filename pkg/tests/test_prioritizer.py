import math
import random

import pytest

from conftest import random_corpus
from lecov.calibration import profile_bounds
from lecov.coverage import CriteriaConfig, CriterionId
from lecov.prioritizer import (
    PrioritizationError,
    ScoredCase,
    evaluate,
    parse_labels,
    rank,
    score_case,
)
from test_coverage import neuron_bounds, neuron_fixture


def test_rank_example():
    selected = rank([("a", 0.9), ("b", 0.2), ("c", 0.5)], budget_fraction=2 / 3)
    assert [c.prompt_id for c in selected] == ["a", "c"]
    assert [c.rank for c in selected] == [0, 1]


def test_rank_ties_lexicographic():
    selected = rank([("c", 0.5), ("a", 0.5), ("b", 0.5)], budget_fraction=1.0)
    assert [c.prompt_id for c in selected] == ["a", "b", "c"]
    assert all(c.normalized_score == 0.5 for c in selected)  # constant pool


def test_rank_full_budget_is_permutation():
    scores = [(f"p{i}", i / 10) for i in range(10)]
    selected = rank(scores, budget_fraction=1.0)
    assert sorted(c.prompt_id for c in selected) == sorted(s[0] for s in scores)


def test_rank_invariant_under_monotone_transform():
    scores = [(f"p{i}", v) for i, v in enumerate([0.1, 0.9, 0.4, 0.7, 0.2])]
    transformed = [(pid, math.exp(3 * v)) for pid, v in scores]
    a = [c.prompt_id for c in rank(scores, 0.6)]
    b = [c.prompt_id for c in rank(transformed, 0.6)]
    assert a == b


def test_rank_rejects_bad_inputs():
    with pytest.raises(PrioritizationError):
        rank([], 0.5)
    with pytest.raises(PrioritizationError):
        rank([("a", 1.0)], 0.0)


def _case(pid, norm, r=0):
    return ScoredCase(prompt_id=pid, raw_score=norm, normalized_score=norm, rank=r)


def test_evaluate_arithmetic():
    scored = [_case("a", 0.8), _case("b", 0.2, 1)]
    report = evaluate(scored, {"a": 1, "b": 0}, 0.5)
    assert report.mae == pytest.approx(0.2)
    assert report.mse == pytest.approx(0.04)


def test_evaluate_perfect_and_antiperfect():
    scored = [_case("a", 1.0), _case("b", 0.0, 1)]
    perfect = evaluate(scored, {"a": 1, "b": 0}, 1.0)
    assert perfect.mae == 0.0 and perfect.mse == 0.0
    anti = evaluate(scored, {"a": 0, "b": 1}, 1.0)
    assert anti.mae == 1.0 and anti.mse == 1.0


def test_evaluate_permutation_invariant():
    scored = [_case("a", 0.9), _case("b", 0.3, 1), _case("c", 0.6, 2)]
    labels = {"a": 1, "b": 0, "c": 1}
    fwd = evaluate(scored, labels, 1.0)
    rev = evaluate(list(reversed(scored)), labels, 1.0)
    assert fwd.mae == rev.mae and fwd.mse == rev.mse


def test_evaluate_missing_label_rejected():
    with pytest.raises(PrioritizationError):
        evaluate([_case("a", 0.5)], {}, 1.0)


def test_mse_at_most_mae_in_unit_interval():
    rng = random.Random(4)
    scored = [_case(f"p{i}", rng.random(), i) for i in range(30)]
    labels = {c.prompt_id: rng.randint(0, 1) for c in scored}
    report = evaluate(scored, labels, 1.0)
    assert report.mse <= report.mae <= 1.0


def test_score_case_empty_trace_zero():
    trace = neuron_fixture([], [])
    bounds = neuron_bounds(trace.topology)
    for c in CriterionId:
        assert score_case(trace, bounds, CriteriaConfig(), c) == 0.0


def test_score_case_known_ihnc():
    trace = neuron_fixture(
        [{0: 0.6, 1: 0.1, 3: 0.2}, {1: 0.7}],
        [[0, 3, 1, 2], [1, 0, 2, 3]],
    )
    bounds = neuron_bounds(trace.topology)
    score = score_case(trace, bounds, CriteriaConfig(h_threshold=0.5), CriterionId.IHNC)
    assert score == 0.5


def test_score_case_kmec_saturation():
    rng = random.Random(5)
    corpus = random_corpus(rng, 8)
    bounds = profile_bounds(corpus)
    config = CriteriaConfig(k_sections=1)
    stepped = [t for t in corpus if t.steps]
    assert stepped
    assert score_case(stepped[0], bounds, config, CriterionId.KMEC) == 1.0


def test_parse_labels():
    assert parse_labels("a\t1\nb\t0\n\n# note\n") == {"a": 1, "b": 0}
    with pytest.raises(PrioritizationError):
        parse_labels("a,1")
    with pytest.raises(PrioritizationError):
        parse_labels("a\t2")
