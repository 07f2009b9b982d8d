from __future__ import annotations

import json
from collections import Counter
from fractions import Fraction

import pytest
from helpers import labels, make_dataset, make_unit
from hypothesis import given, settings
from hypothesis import strategies as st

from credi.corpus import (
    Dataset,
    Dimension,
    RelationInstance,
    RelationLabel,
    SplitSpec,
    anonymize_names,
    balance_labels,
    dataset_stats,
    export_finetune_file,
    load_dataset,
    rename_characters,
    save_dataset,
    split_dataset,
    split_sizes,
)
from credi.errors import AllClassesFiltered, DanglingReference, MissingGold, SchemaError
from credi.prompting import PromptConfig, parse_response

GOLD = {"polarity": "negative", "rel_type": "affiliative", "hierarchy": "senior"}


def _record(**overrides):
    rec = {
        "id": "u1", "novel_id": "n1", "context": "朱聪喝道：“这还不是内功吗？”",
        "quotes": [{"speaker": "朱聪", "addressee": "郭靖", "utterance": "这还不是内功吗？", "span": [6, 14]}],
        "instances": [{"id": "i1", "subject": "朱聪", "object": "郭靖", "gold": dict(GOLD)}],
    }
    rec.update(overrides)
    return rec


def _write(tmp_path, records):
    path = tmp_path / "corpus.jsonl"
    path.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records), encoding="utf-8")
    return path


# -- load_dataset ------------------------------------------------------------

def test_load_valid_record(tmp_path):
    ds = load_dataset(_write(tmp_path, [_record()]))
    inst = ds.instances[0]
    assert inst.unit_id == "u1"
    assert inst.gold[Dimension.HIERARCHY] is RelationLabel.SENIOR
    assert ds.character_roster == {"朱聪", "郭靖"}
    assert ds.gold_label_count() == 3


def test_empty_file_gives_empty_dataset(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    ds = load_dataset(path)
    assert len(ds.units) == 0 and len(ds.instances) == 0


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_dataset("/nonexistent/corpus.jsonl")


def test_gold_without_hierarchy_is_schema_error(tmp_path):
    gold = {"polarity": "negative", "rel_type": "affiliative"}
    rec = _record(instances=[{"id": "i1", "subject": "朱聪", "object": "郭靖", "gold": gold}])
    with pytest.raises(SchemaError) as info:
        load_dataset(_write(tmp_path, [rec]))
    assert info.value.line == 1
    assert "hierarchy" in info.value.field


@pytest.mark.parametrize("mutate", [
    lambda r: r["instances"][0]["gold"].update(polarity="friendly"),
    lambda r: r["instances"][0]["gold"].update(polarity="kinship"),
    lambda r: r.update(extra=1),
    lambda r: r["quotes"][0].update(span=[6, 99]),
    lambda r: r["quotes"][0].update(span=[5, 14]),
    lambda r: r.update(quotes=[]),
    lambda r: r["instances"][0].update(object="朱聪"),
])
def test_malformed_records_rejected(tmp_path, mutate):
    rec = _record()
    mutate(rec)
    with pytest.raises(SchemaError):
        load_dataset(_write(tmp_path, [rec]))


def test_bad_json_line_reports_line(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text(json.dumps(_record(), ensure_ascii=False) + "\n{oops\n", encoding="utf-8")
    with pytest.raises(SchemaError) as info:
        load_dataset(path)
    assert info.value.line == 2


def test_dangling_unit_reference(tmp_path):
    rec = _record()
    rec["instances"][0]["unit_id"] = "missing"
    with pytest.raises(DanglingReference):
        load_dataset(_write(tmp_path, [rec]))


def test_save_load_round_trip(tmp_path, fixture50):
    path = tmp_path / "rt.jsonl"
    save_dataset(fixture50, path)
    again = load_dataset(path)
    assert again.instances == fixture50.instances
    assert dict(again.units) == dict(fixture50.units)
    save_dataset(again, tmp_path / "rt2.jsonl")
    assert path.read_bytes() == (tmp_path / "rt2.jsonl").read_bytes()


# -- stats ---------------------------------------------------------------------

def test_stats_single_instance():
    ds = make_dataset([("甲", "乙", labels("positive", "kinship", "senior"))])
    report = dataset_stats(ds)
    assert report.percentages[Dimension.POLARITY][RelationLabel.POSITIVE] == 100.0
    assert report.percentages[Dimension.REL_TYPE][RelationLabel.KINSHIP] == 100.0
    assert report.percentages[Dimension.HIERARCHY][RelationLabel.SENIOR] == 100.0
    assert report.counts[Dimension.POLARITY][RelationLabel.NEGATIVE] == 0


def test_stats_empty_dataset_percentages_undefined():
    report = dataset_stats(Dataset.build([], []))
    assert report.instance_count == 0
    assert all(p is None for d in Dimension for p in report.percentages[d].values())
    assert "n/a" in report.format_table()


def test_stats_percentages_sum_to_100(fixture50):
    report = dataset_stats(fixture50)
    for dim in Dimension:
        assert abs(sum(report.percentages[dim].values()) - 100.0) <= 0.01
        assert sum(report.counts[dim].values()) == report.instance_count


# -- split -----------------------------------------------------------------------

def test_split_sizes_examples():
    assert split_sizes(3591, SplitSpec(seed=42)) == (2872, 359, 360)
    assert split_sizes(10, SplitSpec(seed=7)) == (8, 1, 1)


def test_split_deterministic_and_unit_scoped(fixture50):
    a = split_dataset(fixture50, SplitSpec(seed=7))
    b = split_dataset(fixture50, SplitSpec(seed=7))
    assert [p.instances for p in a] == [p.instances for p in b]
    for part in a:
        assert {i.unit_id for i in part.instances} == set(part.units)


def test_split_seed_changes_membership(fixture50):
    a = split_dataset(fixture50, SplitSpec(seed=1))[0]
    b = split_dataset(fixture50, SplitSpec(seed=2))[0]
    assert {i.id for i in a.instances} != {i.id for i in b.instances}


def test_split_spec_validation():
    with pytest.raises(ValueError):
        SplitSpec(Fraction(1, 2), Fraction(1, 2), Fraction(1, 10))
    with pytest.raises(ValueError):
        SplitSpec(Fraction(1), Fraction(0), Fraction(0))
    with pytest.raises(ValueError):
        SplitSpec(seed=2**64)


def test_split_empty_dataset():
    from credi.errors import EmptyDataset
    with pytest.raises(EmptyDataset):
        split_dataset(Dataset.build([], []), SplitSpec())


@settings(max_examples=50, deadline=None)
@given(n=st.integers(3, 60), seed=st.integers(0, 2**32))
def test_split_partition_property(n, seed):
    ds = make_dataset([(f"甲{i}", f"乙{i}", None) for i in range(n)])
    parts = split_dataset(ds, SplitSpec(seed=seed))
    ids = [[i.id for i in p.instances] for p in parts]
    flat = [x for part in ids for x in part]
    assert len(flat) == len(set(flat)) == n
    assert set(flat) == {i.id for i in ds.instances}
    assert tuple(len(p) for p in ids) == (n * 8 // 10, n // 10, n - n * 8 // 10 - n // 10)


# -- anonymize ------------------------------------------------------------------

def _two_name_dataset():
    unit = make_unit("u1", [("朱聪", "郭靖", "郭靖，这还不是内功吗？"), ("郭靖", "朱聪", "弟子不知。")],
                     narration="朱聪见郭靖站着不动。")
    inst = RelationInstance("i1", "u1", "朱聪", "郭靖", labels("negative", "affiliative", "senior"))
    return Dataset.build([unit], [inst])


def test_anonymize_replaces_everywhere():
    ds = _two_name_dataset()
    anon, name_map = anonymize_names(ds, seed=5)
    assert sorted(name_map) == ["朱聪", "郭靖"]
    assert sorted(name_map.values()) == ["C001", "C002"]
    inst = anon.instances[0]
    assert (inst.subject, inst.object) == (name_map["朱聪"], name_map["郭靖"])
    unit = anon.units["u1"]
    for name in ("朱聪", "郭靖"):
        assert name not in unit.context
        assert all(name not in q.utterance for q in unit.quotes)
    assert unit.quotes[0].speaker == name_map["朱聪"]
    assert unit.quotes[0].addressee == name_map["郭靖"]
    assert anon.character_roster == set(name_map.values())


def test_anonymize_seed_controls_assignment():
    maps = {tuple(sorted(anonymize_names(_two_name_dataset(), seed=s)[1].items())) for s in range(20)}
    assert len(maps) == 2


def test_anonymize_empty_roster():
    ds = Dataset.build([], [])
    out, name_map = anonymize_names(ds, seed=1)
    assert out is ds and name_map == {}


def test_anonymize_longest_match_first():
    unit = make_unit("u1", [("郭靖", "郭靖哥哥", "郭靖哥哥好。")])
    inst = RelationInstance("i1", "u1", "郭靖", "郭靖哥哥")
    anon, name_map = anonymize_names(Dataset.build([unit], [inst]), seed=0)
    assert anon.units["u1"].quotes[0].utterance == f"{name_map['郭靖哥哥']}好。"


def test_anonymize_inverse_restores_fixture(fixture50):
    anon, name_map = anonymize_names(fixture50, seed=11)
    back = rename_characters(anon, {v: k for k, v in name_map.items()}, whole_token=False)
    assert back.instances == fixture50.instances
    assert dict(back.units) == dict(fixture50.units)


@settings(max_examples=40, deadline=None)
@given(names=st.lists(st.text(alphabet="张王李赵钱孙周吴郑", min_size=1, max_size=3),
                      min_size=2, max_size=5, unique=True), seed=st.integers(0, 1000))
def test_anonymize_round_trip_property(names, seed):
    turns = [(names[i], names[(i + 1) % len(names)], f"{names[(i + 2) % len(names)]}来了。")
             for i in range(len(names))]
    unit = make_unit("u1", turns, narration="".join(names) + "在场。")
    insts = [RelationInstance(f"i{j}", "u1", s, o) for j, (s, o, _) in enumerate(turns)]
    ds = Dataset.build([unit], insts)
    anon, name_map = anonymize_names(ds, seed)
    assert len(set(name_map.values())) == len(name_map)
    back = rename_characters(anon, {v: k for k, v in name_map.items()}, whole_token=False)
    assert back.units["u1"] == unit
    assert back.instances == ds.instances


# -- balance ---------------------------------------------------------------------

def _counted(counts: dict[str, int]):
    rows = []
    for lab, n in counts.items():
        rows.extend((f"甲{lab}{i}", f"乙{lab}{i}", labels(lab)) for i in range(n))
    return make_dataset(rows)


def test_balance_example():
    ds = _counted({"positive": 100, "neutral": 5, "negative": 40})
    out = balance_labels(ds, Dimension.POLARITY, min_count=10, max_count=50, seed=3)
    got = Counter(i.gold[Dimension.POLARITY].value for i in out.instances)
    assert got == {"positive": 50, "negative": 40}
    order = [ds.instances.index(i) for i in out.instances]
    assert order == sorted(order)


def test_balance_identity_and_determinism():
    ds = _counted({"positive": 7, "neutral": 3, "negative": 4})
    assert balance_labels(ds, Dimension.POLARITY, 0, None).instances == ds.instances
    a = balance_labels(ds, Dimension.POLARITY, 0, 2, seed=9)
    b = balance_labels(ds, Dimension.POLARITY, 0, 2, seed=9)
    assert a.instances == b.instances


def test_balance_errors():
    ds = _counted({"positive": 3})
    with pytest.raises(AllClassesFiltered):
        balance_labels(ds, Dimension.POLARITY, min_count=10)
    with pytest.raises(ValueError):
        balance_labels(ds, Dimension.POLARITY, min_count=5, max_count=2)
    with pytest.raises(MissingGold):
        balance_labels(make_dataset([("甲", "乙", None)]), Dimension.POLARITY, 0)


@settings(max_examples=40, deadline=None)
@given(counts=st.lists(st.integers(0, 30), min_size=3, max_size=3),
       lo=st.integers(0, 15), span=st.integers(1, 20), seed=st.integers(0, 99))
def test_balance_property(counts, lo, span, seed):
    raw = dict(zip(("positive", "neutral", "negative"), counts))
    if max(counts) < lo or sum(counts) == 0:
        return
    ds = _counted(raw)
    out = balance_labels(ds, Dimension.POLARITY, lo, lo + span, seed)
    got = Counter(i.gold[Dimension.POLARITY].value for i in out.instances)
    for lab, n in got.items():
        assert n <= lo + span
        assert not 0 < n < lo
        assert n == min(raw[lab], lo + span)


# -- fine-tune export ------------------------------------------------------------

def test_export_finetune_round_trip(tmp_path, fixture50):
    path = tmp_path / "ft.jsonl"
    n = export_finetune_file(fixture50, PromptConfig(), path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert n == len(lines) == len(fixture50.instances)
    for inst, line in zip(fixture50.instances, lines):
        rec = json.loads(line)
        assert set(rec) == {"instruction", "input", "output"}
        assert rec["input"].count("ANSWER:") == 1
        assert parse_response(rec["output"]) == dict(inst.gold)


def test_export_finetune_empty_and_missing_gold(tmp_path):
    path = tmp_path / "ft.jsonl"
    assert export_finetune_file(Dataset.build([], []), PromptConfig(), path) == 0
    assert path.read_text(encoding="utf-8") == ""
    with pytest.raises(MissingGold):
        export_finetune_file(make_dataset([("甲", "乙", None)]), PromptConfig(), path)


def test_count_identity_on_fixture(fixture50):
    assert fixture50.gold_label_count() == 3 * len(fixture50.instances) == 150
