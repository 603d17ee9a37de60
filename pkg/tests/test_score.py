from __future__ import annotations

import random
from fractions import Fraction
from functools import lru_cache

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ieprompt.schema import Annotation, TaskKind, load_schema
from ieprompt.score import (
    LabelPartition,
    Matcher,
    MatchPolicy,
    PolicyMismatch,
    ScoreReport,
    format_report,
    load_partitions,
    prf,
    score,
    score_arguments,
    score_corpus,
    score_partitioned,
)

from conftest import SCHEMAS

A = Annotation


def ent(label, span):
    return A(label, {"span": span})


def brute_force_tp(gold, pred, match) -> int:
    """Maximum one-to-one matching size by exhaustive search over gold subsets."""

    @lru_cache(maxsize=None)
    def best(j: int, used: int) -> int:
        if j == len(pred):
            return 0
        out = best(j + 1, used)
        for i, g in enumerate(gold):
            if not used >> i & 1 and match(g, pred[j]):
                out = max(out, 1 + best(j + 1, used | 1 << i))
        return out

    return best(0, 0)


def random_doc(rng: random.Random):
    labels, spans = ["A", "B", "C"], ["x", "y", "x y", " x ", "z"]
    gold = [ent(rng.choice(labels), rng.choice(spans)) for _ in range(rng.randint(0, 6))]
    pred = [ent(rng.choice(labels), rng.choice(spans)) for _ in range(rng.randint(0, 6))]
    return gold, pred


@pytest.mark.parametrize("policy", [MatchPolicy.EXACT, MatchPolicy.CATEGORY])
def test_greedy_equals_maximum_matching(policy):
    rng = random.Random(11)
    m = Matcher(policy)
    for _ in range(500):
        gold, pred = random_doc(rng)
        rep = score(gold, pred, policy)
        expected = brute_force_tp(gold, pred, lambda g, p: g.label == p.label and m.strings(g.span(), p.span()))
        assert rep.tp == expected
        assert rep.tp + rep.fp == len(pred) and rep.tp + rep.fn == len(gold)


def test_f1_spot_checks():
    gold = [ent("A", "x"), ent("B", "y")]
    assert score(gold, gold).exact == (1, 1, 1)
    assert score(gold, [ent("C", "q")]).f1 == 0.0
    rep = score([ent("A", "x"), ent("C", "y")], [ent("A", "x"), ent("B", "z")])
    assert (rep.tp, rep.fp, rep.fn) == (1, 1, 1)
    assert rep.exact[2] == Fraction(1, 2)
    assert score([], []).f1 == 0.0


def test_prf_against_textbook_formula():
    rng = random.Random(2)
    for _ in range(200):
        tp, fp, fn = rng.randint(0, 9), rng.randint(0, 9), rng.randint(0, 9)
        p, r, f = prf(tp, fp, fn)
        if tp:
            assert f == Fraction(2 * tp, 2 * tp + fp + fn)
        else:
            assert f == 0


def test_exact_span_normalizes_whitespace_only():
    assert score([ent("A", "New  York")], [ent("A", " New York\n")]).tp == 1
    assert score([ent("A", "New York")], [ent("A", "new york")]).tp == 0


def test_partial_span():
    assert score([ent("A", "the convoy")], [ent("A", "convoy")], MatchPolicy.PARTIAL).tp == 1
    assert score([ent("A", "convoy")], [ent("A", "the convoy")], MatchPolicy.PARTIAL).tp == 1
    assert score([ent("A", "convoy")], [ent("A", "troops")], MatchPolicy.PARTIAL).tp == 0
    j = dict(policy=MatchPolicy.PARTIAL, partial="jaccard")
    assert score([ent("A", "a b c")], [ent("A", "a b d")], **j).tp == 1  # 2/4
    assert score([ent("A", "a b c")], [ent("A", "a d e")], **j).tp == 0


def test_category_only_needs_an_event_task():
    with pytest.raises(PolicyMismatch):
        score([], [], MatchPolicy.CATEGORY, kind=TaskKind.NER)
    score([], [], MatchPolicy.CATEGORY, kind=TaskKind.EE)
    with pytest.raises(PolicyMismatch):
        score([], [], "CategoryOnly", schema=load_schema(SCHEMAS / "ner.yaml"))


@settings(max_examples=300, deadline=None)
@given(st.randoms(use_true_random=False))
def test_swapping_gold_and_pred_swaps_precision_and_recall(rnd):
    gold, pred = random_doc(rnd)
    for policy in (MatchPolicy.EXACT, MatchPolicy.CATEGORY):
        a, b = score(gold, pred, policy), score(pred, gold, policy)
        assert (a.tp, a.fp, a.fn) == (b.tp, b.fn, b.fp)
        assert a.exact[2] == b.exact[2]


@settings(max_examples=300, deadline=None)
@given(st.randoms(use_true_random=False))
def test_category_only_dominates_exact(rnd):
    gold, pred = random_doc(rnd)
    exact, cat = score(gold, pred), score(gold, pred, MatchPolicy.CATEGORY)
    partial = score(gold, pred, MatchPolicy.PARTIAL)
    assert cat.tp >= exact.tp and cat.tp >= partial.tp
    assert cat.f1 >= exact.f1


def test_corpus_is_sum_of_documents():
    rng = random.Random(4)
    docs = [random_doc(rng) for _ in range(30)]
    total = score_corpus([g for g, _ in docs], [p for _, p in docs])
    assert total.tp == sum(score(g, p).tp for g, p in docs)
    assert total.fp == sum(score(g, p).fp for g, p in docs)
    d = total.to_dict()
    assert d["micro"]["f1"] == total.f1 and set(d["per_label"]) <= {"A", "B", "C"}
    assert "micro" in format_report(total)
    with pytest.raises(ValueError):
        score_corpus([[]], [])


def test_event_arguments():
    schema = load_schema(SCHEMAS / "eae.yaml")
    gold = [A("Attack", {"mention": "fired", "attacker": ["Rebels"], "target": ["the convoy"], "place": ["Kabul"]})]
    pred = [A("Attack", {"mention": "fired rockets", "attacker": ["Rebels"], "target": ["convoy", "troops"]})]
    rep = score_arguments(gold, pred, schema)
    assert (rep.tp, rep.fp, rep.fn) == (2, 1, 1)
    strict = score_arguments(gold, pred, schema, MatchPolicy.EXACT)
    assert (strict.tp, strict.fp, strict.fn) == (1, 2, 2)
    # an unpaired event contributes all its arguments as errors
    wrong = [A("Transport", {"mention": "fired", "artifact": ["Rebels"]})]
    rep = score_arguments(gold, wrong, schema)
    assert (rep.tp, rep.fp, rep.fn) == (0, 1, 3)


def test_shipped_partitions():
    parts = load_partitions()
    assert len(parts) == 15
    assert parts["BroadTwitter"] == LabelPartition({"Location", "Organization", "Person"}, set())
    assert parts["HarveyNER"] == LabelPartition(set(), {"Point", "Area", "Road", "River"})
    assert "PhisingAttack" in parts["CASIE_EE"].unseen
    for p in parts.values():
        assert not p.seen & p.unseen
    with pytest.raises(ValueError):
        LabelPartition({"A"}, {"A"})


def test_partitioned_scores():
    part = LabelPartition({"A"}, {"B"})
    gold = [ent("A", "x"), ent("B", "y"), ent("Q", "q")]
    pred = [ent("A", "x"), ent("B", "wrong"), ent("R", "r")]
    seen, unseen = score_partitioned(gold, pred, MatchPolicy.EXACT, part)
    assert seen.f1 == 1.0 and unseen.f1 == 0.0
    assert seen.uncovered_pred == unseen.uncovered_pred == 1
    assert seen.uncovered_gold == unseen.uncovered_gold == 1
    assert "Q" not in seen.per_label and "R" not in unseen.per_label


def test_report_addition():
    a, b = score([ent("A", "x")], [ent("A", "x")]), score([ent("B", "y")], [])
    s = a + b
    assert (s.tp, s.fn) == (1, 1) and set(s.per_label) == {"A", "B"}
    assert isinstance(ScoreReport() + s, ScoreReport)


def test_policy_names():
    assert MatchPolicy.parse("partial") is MatchPolicy.PARTIAL
    assert MatchPolicy.parse("CategoryOnly") is MatchPolicy.CATEGORY
    with pytest.raises(ValueError):
        MatchPolicy.parse("fuzzy")
