from __future__ import annotations

import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from credi import HashEmbedder, RelationExtractor
from credi.corpus import Dataset, Dimension, SplitSpec, split_dataset
from credi.errors import EmptyDataset, MissingGold
from credi.estimator import check_dataset
from credi.inference import MockLookupBackend, MockRuleBackend
from credi.prompting import render_answer


@pytest.fixture(scope="module")
def parts(fixture50):
    return split_dataset(fixture50, SplitSpec(seed=1))


def _gold_backend(ds):
    return MockLookupBackend({i.id: render_answer(i.gold) for i in ds.instances})


def test_params_and_clone():
    est = RelationExtractor(mode="per_dimension", n_exemplars=5, embedder=HashEmbedder(dim=64))
    params = est.get_params()
    assert params["mode"] == "per_dimension" and params["n_exemplars"] == 5
    twin = clone(est)
    assert twin.get_params()["embedder"].dim == 64
    assert twin.set_params(n_exemplars=1).n_exemplars == 1
    assert est.n_exemplars == 5


def test_predict_before_fit(parts):
    with pytest.raises(NotFittedError):
        RelationExtractor(backend=MockRuleBackend("x")).build_prompts(parts[2])


def test_fit_predict_score(fixture50, parts):
    train, _, test = parts
    est = RelationExtractor(backend=_gold_backend(fixture50)).fit(train)
    assert len(est.index_) == len(train)
    preds = est.predict(test)
    assert preds == [i.gold for i in test.instances]
    assert est.score(test) == 1.0


def test_per_dimension_mode_prompts(fixture50, parts):
    train, _, test = parts
    est = RelationExtractor(backend=_gold_backend(fixture50), mode="per_dimension").fit(train)
    prompts = est.build_prompts(test)
    assert len(prompts) == 3 * len(test)
    assert {d for _, _, d in prompts} == set(Dimension)


def test_zero_shot_needs_no_gold(parts):
    train, _, test = parts
    unlabeled = Dataset.build(train.units.values(),
                              [type(i)(i.id, i.unit_id, i.subject, i.object) for i in train.instances])
    est = RelationExtractor(backend=MockRuleBackend("polarity=neutral; rel_type=other; hierarchy=peer"),
                            n_exemplars=0).fit(unlabeled)
    assert est.index_ is None
    assert all(p is not None for p in est.predict(test))
    with pytest.raises(MissingGold):
        RelationExtractor(n_exemplars=3).fit(unlabeled)


def test_unparseable_backend_gives_none(parts):
    train, _, test = parts
    est = RelationExtractor(backend=MockRuleBackend("no idea")).fit(train)
    assert est.predict(test) == [None] * len(test)
    assert est.score(test) == 0.0


def test_check_dataset():
    with pytest.raises(TypeError):
        check_dataset([1, 2])
    with pytest.raises(EmptyDataset):
        check_dataset(Dataset.build([], []))
    assert len(check_dataset(Dataset.build([], []), allow_empty=True)) == 0


def test_bad_mode(parts):
    with pytest.raises(ValueError):
        RelationExtractor(mode="both").fit(parts[0])
