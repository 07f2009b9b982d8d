"""Estimator front-end: ``fit`` indexes a labelled training set, ``predict`` labels new pairs.

The estimator follows scikit-learn conventions (constructor stores parameters
verbatim, fitted state ends in an underscore, ``get_params``/``set_params``
come from :class:`~sklearn.base.BaseEstimator`) so it can be cloned and
grid-searched. Inputs are :class:`~credi.corpus.Dataset` objects rather than
arrays.
"""
from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_is_fitted

from credi.corpus.types import Dataset, Dimension
from credi.errors import EmptyDataset, MissingGold
from credi.evaluation import EvalReport, evaluate
from credi.inference import BackendConfig, PredictionRecord, merge_predictions, parse_records, predict_batch
from credi.prompting import JOINT, PER_DIMENSION, PromptConfig, build_prompt, render_prompt
from credi.retrieval import HashEmbedder, build_index, embedding_text, select_exemplars

logger = logging.getLogger(__name__)


def check_dataset(X, require_gold: bool = False, allow_empty: bool = False) -> Dataset:
    """Validate estimator input; returns it unchanged."""
    if not isinstance(X, Dataset):
        raise TypeError(f"expected a Dataset, got {type(X).__name__}")
    if not X.instances and not allow_empty:
        raise EmptyDataset("dataset has no relation instances")
    if require_gold:
        for inst in X.instances:
            if inst.gold is None:
                raise MissingGold(inst.id)
    return X


class RelationExtractor(BaseEstimator):
    """Retrieval-augmented prompting of a chat backend for three-dimension relation labels.

    Parameters
    ----------
    backend : object with ``complete(prompt, instance_id)``
        Completion engine (remote chat or a mock).
    embedder : transformer, default HashEmbedder()
        Maps texts to unit vectors; cloned on ``fit``.
    mode : {"joint", "per_dimension"}
        One prompt for all three dimensions, or one prompt per dimension.
    dialogue_variant : {"expanded", "basic"}
    n_exemplars : int
        Retrieved in-context examples per prompt (0 = zero-shot).
    """

    def __init__(self, backend=None, embedder=None, mode: str = JOINT, dialogue_variant: str = "expanded",
                 n_exemplars: int = 3, locale: str = "zh", exclude_self: bool = True,
                 backend_config: BackendConfig | None = None, templates=None):
        self.backend = backend
        self.embedder = embedder
        self.mode = mode
        self.dialogue_variant = dialogue_variant
        self.n_exemplars = n_exemplars
        self.locale = locale
        self.exclude_self = exclude_self
        self.backend_config = backend_config
        self.templates = templates

    def _prompt_configs(self) -> list[PromptConfig]:
        common = dict(dialogue_variant=self.dialogue_variant, exemplar_count=self.n_exemplars,
                      locale=self.locale, templates=self.templates or {})
        if self.mode == JOINT:
            return [PromptConfig(mode=JOINT, **common)]
        if self.mode == PER_DIMENSION:
            return [PromptConfig(mode=PER_DIMENSION, dimension=d, **common) for d in Dimension]
        raise ValueError(f"unknown mode {self.mode!r}")

    def fit(self, X: Dataset, y=None):
        X = check_dataset(X, require_gold=self.n_exemplars > 0)
        self._prompt_configs()
        self.embedder_ = clone(self.embedder, safe=False) if self.embedder is not None else HashEmbedder()
        self.train_ = X
        self.index_ = build_index(X, self.dialogue_variant, self.embedder_, self.locale) if self.n_exemplars else None
        return self

    def build_prompts(self, X: Dataset) -> list[tuple[str, str, Dimension | None]]:
        """Rendered prompts as ``(instance_id, text, dimension)``; dimension is None in joint mode."""
        check_is_fitted(self, ["train_"])
        X = check_dataset(X)
        configs = self._prompt_configs()
        exemplars_by_id = {}
        if self.index_ is not None:
            texts = [embedding_text(inst, X.unit_of(inst), self.dialogue_variant, self.locale)
                     for inst in X.instances]
            queries = self.embedder_.transform(texts) if texts else np.zeros((0, self.index_.dim))
            for inst, q in zip(X.instances, queries):
                exemplars_by_id[inst.id] = select_exemplars(
                    self.index_, inst, self.n_exemplars, self.train_, query_vector=q,
                    exclude_self=self.exclude_self, variant=self.dialogue_variant, locale=self.locale)
        prompts = []
        for inst in X.instances:
            unit = X.unit_of(inst)
            shots = exemplars_by_id.get(inst.id, [])
            for cfg in configs:
                spec = build_prompt(inst, unit, cfg, shots)
                prompts.append((inst.id, render_prompt(spec), cfg.dimension))
        return prompts

    def predict_records(self, X: Dataset) -> list[PredictionRecord]:
        if self.backend is None:
            raise ValueError("RelationExtractor needs a backend to predict")
        prompts = self.build_prompts(X)
        records = predict_batch(self.backend, prompts, self.backend_config or BackendConfig())
        return parse_records(records)

    def predict(self, X: Dataset) -> list[dict | None]:
        """Label map per instance, in input order; None where any dimension failed."""
        merged = merge_predictions(self.predict_records(X))
        return [merged.get(inst.id) for inst in X.instances]

    def evaluate(self, X: Dataset) -> EvalReport:
        X = check_dataset(X, require_gold=True)
        return evaluate(X.instances, self.predict_records(X))

    def score(self, X: Dataset, y=None) -> float:
        """Mean weighted-F1 over the three dimensions."""
        report = self.evaluate(X)
        return float(np.mean([report.f1(d) for d in Dimension]))
