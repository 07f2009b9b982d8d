from __future__ import annotations

import json
import random
from fractions import Fraction

import pytest
from helpers import labels, make_dataset
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import f1_score

from credi.corpus import Dimension
from credi.errors import LengthMismatch, MissingPrediction, UnknownLabel
from credi.evaluation import (
    UNPARSED,
    AblationConfig,
    AblationTable,
    EvalReport,
    evaluate,
    per_class_scores,
    run_ablation,
    weighted_f1,
)
from credi.inference import PredictionRecord, parse_records
from credi.prompting import render_answer


def oracle_weighted_f1(gold, pred, classes):
    """Exact rational computation straight from the definition."""
    n = len(gold)
    total = Fraction(0)
    for c in classes:
        tp = sum(1 for g, p in zip(gold, pred) if g == c and p == c)
        fp = sum(1 for g, p in zip(gold, pred) if g != c and p == c)
        fn = sum(1 for g, p in zip(gold, pred) if g == c and p != c)
        if tp == 0:
            continue  # P or R is zero, so F1 is zero
        f1 = Fraction(2 * tp, 2 * tp + fp + fn)
        total += Fraction(tp + fn, n) * f1
    return total


def test_hand_computed_case():
    assert weighted_f1(list("AAB"), list("ABB"), "AB") == pytest.approx(2 / 3, abs=1e-12)
    assert oracle_weighted_f1(list("AAB"), list("ABB"), "AB") == Fraction(2, 3)


def test_perfect_prediction_is_exactly_one():
    rng = random.Random(4)
    for _ in range(200):
        gold = [rng.choice("ABC") for _ in range(rng.randint(1, 300))]
        assert weighted_f1(gold, gold, "ABC") == 1.0


def test_missing_class_contributes_zero():
    scores = per_class_scores(list("AAC"), list("AAA"), "ABC")
    assert scores["C"]["f1"] == 0.0 and scores["B"]["support"] == 0


def test_input_errors():
    with pytest.raises(LengthMismatch):
        weighted_f1(["A"], [], "AB")
    with pytest.raises(LengthMismatch):
        weighted_f1([], [], "AB")
    with pytest.raises(UnknownLabel):
        weighted_f1(["Z"], ["A"], "AB")
    with pytest.raises(UnknownLabel):
        weighted_f1(["A"], ["Z"], "AB")


def test_unparsed_hurts_recall_only():
    scores = per_class_scores(list("AB"), ["A", UNPARSED], "AB")
    assert scores["B"]["recall"] == 0.0
    assert scores["A"]["precision"] == 1.0


@settings(max_examples=200, deadline=None)
@given(data=st.data(), n_classes=st.integers(1, 9))
def test_oracle_agreement(data, n_classes):
    classes = [f"c{i}" for i in range(n_classes)]
    n = data.draw(st.integers(1, 400))
    gold = data.draw(st.lists(st.sampled_from(classes), min_size=n, max_size=n))
    pred = data.draw(st.lists(st.sampled_from(classes + [UNPARSED]), min_size=n, max_size=n))
    got = weighted_f1(gold, pred, classes)
    assert abs(got - float(oracle_weighted_f1(gold, pred, classes))) <= 1e-9
    sk = f1_score(gold, pred, labels=classes, average="weighted", zero_division=0)
    assert abs(got - sk) <= 1e-9
    assert 0.0 <= got <= 1.0


@settings(max_examples=60, deadline=None)
@given(pairs=st.lists(st.tuples(st.sampled_from("ABC"), st.sampled_from("ABC")), min_size=1, max_size=80),
       seed=st.integers(0, 999))
def test_permutation_and_relabeling_invariance(pairs, seed):
    gold, pred = map(list, zip(*pairs))
    base = weighted_f1(gold, pred, "ABC")
    shuffled = pairs[:]
    random.Random(seed).shuffle(shuffled)
    g2, p2 = map(list, zip(*shuffled))
    assert weighted_f1(g2, p2, "ABC") == pytest.approx(base, abs=1e-12)
    relabel = dict(zip("ABC", "CAB"))
    assert weighted_f1([relabel[g] for g in gold], [relabel[p] for p in pred], "ABC") == pytest.approx(
        base, abs=1e-12)


# -- evaluate ------------------------------------------------------------------

def _records_for(ds, answer_of):
    return parse_records([PredictionRecord(i.id, answer_of(i)) for i in ds.instances])


def test_gold_echo_scores_one(fixture50):
    report = evaluate(fixture50.instances, _records_for(fixture50, lambda i: render_answer(i.gold)))
    for dim in Dimension:
        assert report.f1(dim) == 1.0
        per = report.per_dimension[dim]
        assert sum(c["support"] for c in per.per_class.values()) == 50
        for gold_label, row in per.confusion.items():
            assert sum(row.values()) == per.per_class[gold_label]["support"]


def test_confusion_cell_for_wrong_polarity():
    ds = make_dataset([("朱聪", "郭靖", labels("negative", "affiliative", "senior"))])
    recs = _records_for(ds, lambda i: "polarity=neutral; rel_type=affiliative; hierarchy=senior")
    report = evaluate(ds.instances, recs)
    assert report.per_dimension[Dimension.POLARITY].confusion["negative"]["neutral"] == 1
    assert report.f1(Dimension.REL_TYPE) == 1.0


def test_injected_parse_failures(fixture50):
    clean = evaluate(fixture50.instances, _records_for(fixture50, lambda i: render_answer(i.gold)))
    poisoned = {i.id for i in fixture50.instances[::10]}
    recs = _records_for(fixture50, lambda i: "garbage" if i.id in poisoned else render_answer(i.gold))
    report = evaluate(fixture50.instances, recs)
    for dim in Dimension:
        assert report.per_dimension[dim].parse_failure_count == 5
        assert report.f1(dim) < clean.f1(dim)
        assert sum(row[UNPARSED] for row in report.per_dimension[dim].confusion.values()) == 5


def test_per_dimension_records(fixture50):
    recs = []
    for inst in fixture50.instances:
        for dim in Dimension:
            recs.append(PredictionRecord(inst.id, render_answer(inst.gold, [dim]), dim))
    report = evaluate(fixture50.instances, parse_records(recs))
    assert all(report.f1(d) == 1.0 for d in Dimension)


def test_missing_prediction(fixture50):
    recs = _records_for(fixture50, lambda i: render_answer(i.gold))[:-1]
    with pytest.raises(MissingPrediction):
        evaluate(fixture50.instances, recs)


def test_report_json_round_trip(fixture50):
    recs = _records_for(fixture50, lambda i: "polarity=positive; rel_type=other; hierarchy=peer")
    report = evaluate(fixture50.instances, recs)
    again = EvalReport.from_dict(json.loads(report.to_json()))
    assert again.to_dict() == report.to_dict()
    assert "Relationship Polarity" in report.format_table()


# -- ablation ------------------------------------------------------------------

def test_ablation_grid_and_failed_cell(tmp_path, fixture50):
    cfg = AblationConfig(("joint", "per_dimension"), ("expanded", "basic"), (0, 3))
    assert len(cfg.cells()) == 8

    def run_cell(mode, variant, k):
        if (mode, variant, k) == ("per_dimension", "basic", 0):
            raise RuntimeError("backend down")
        return evaluate(fixture50.instances, _records_for(fixture50, lambda i: render_answer(i.gold)))

    table = run_ablation(cfg, run_cell)
    statuses = [c["status"] for c in table.cells]
    assert statuses.count("ok") == 7 and statuses.count("failed") == 1
    table.save(tmp_path / "ablation.json")
    again = AblationTable.load(tmp_path / "ablation.json")
    assert again.to_dict() == table.to_dict()
    assert "(failed)" in again.format_table()
    assert again.reports()["joint/basic/k=3"].f1(Dimension.HIERARCHY) == 1.0


def test_ablation_config_validation():
    with pytest.raises(ValueError):
        AblationConfig(modes=())
    with pytest.raises(ValueError):
        AblationConfig(variants=("fancy",))
