"""Embedding and exact Top-K cosine retrieval of in-context exemplars."""
from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import requests
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.feature_extraction.text import HashingVectorizer

from credi.corpus.types import Dataset, RelationInstance
from credi.dialogue import dialogue_text
from credi.errors import DimensionMismatch, EmbedderFailure, EmptyDataset, MissingGold
from credi.prompting import Exemplar

logger = logging.getLogger(__name__)

INDEX_FORMAT = "credi-retrieval-index"
INDEX_VERSION = 1


def l2_normalize(matrix: np.ndarray) -> np.ndarray:
    """Row-normalize to unit length in float32; all-zero rows become e_0."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim == 1:
        return l2_normalize(matrix[None, :])[0]
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    out = np.divide(matrix, norms, out=np.zeros_like(matrix), where=norms > 0)
    zero = norms[:, 0] == 0
    if zero.any():
        out[zero, 0] = 1.0
    return out.astype(np.float32)


class HashEmbedder(BaseEstimator, TransformerMixin):
    """Offline embedder: signed feature hashing of character 1..3-grams.

    Stateless, so ``fit`` is a no-op; ``transform`` maps a sequence of texts to
    an ``(n, dim)`` float32 array of unit vectors.
    """

    def __init__(self, dim: int = 256, ngram_range: tuple[int, int] = (1, 3)):
        self.dim = dim
        self.ngram_range = ngram_range

    @property
    def name(self) -> str:
        return f"hash-char{self.ngram_range[0]}-{self.ngram_range[1]}-d{self.dim}"

    def _vectorizer(self) -> HashingVectorizer:
        return HashingVectorizer(analyzer="char", ngram_range=tuple(self.ngram_range),
                                 n_features=self.dim, alternate_sign=True, norm=None,
                                 lowercase=True, dtype=np.float64)

    def fit(self, X=None, y=None):
        return self

    def transform(self, X: Sequence[str]) -> np.ndarray:
        if isinstance(X, str):
            raise TypeError("expected a sequence of texts, got a single string")
        counts = self._vectorizer().transform(list(X)).toarray()
        return l2_normalize(counts)

    def embed(self, text: str) -> np.ndarray:
        return self.transform([text])[0]


class HttpEmbedder(BaseEstimator, TransformerMixin):
    """Remote embedding endpoint speaking ``{"input": [...]}`` -> ``{"data": [{"embedding": [...]}]}``."""

    def __init__(self, endpoint: str, dim: int, name: str = "http", batch_size: int = 32,
                 parallelism: int = 4, timeout: float = 30.0, api_key_env: str = "CREDI_API_KEY"):
        self.endpoint = endpoint
        self.dim = dim
        self.name = name
        self.batch_size = batch_size
        self.parallelism = parallelism
        self.timeout = timeout
        self.api_key_env = api_key_env

    def fit(self, X=None, y=None):
        return self

    def _post(self, texts: list[str]) -> list[list[float]]:
        headers = {}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        resp = requests.post(self.endpoint, json={"input": texts}, headers=headers, timeout=self.timeout)
        resp.raise_for_status()
        data = resp.json()["data"]
        if len(data) != len(texts):
            raise ValueError(f"endpoint returned {len(data)} embeddings for {len(texts)} inputs")
        return [row["embedding"] for row in data]

    def transform(self, X: Sequence[str]) -> np.ndarray:
        texts = list(X)
        batches = [texts[i:i + self.batch_size] for i in range(0, len(texts), self.batch_size)]
        with ThreadPoolExecutor(max_workers=max(1, self.parallelism)) as pool:
            results = list(pool.map(self._post, batches))
        rows = [vec for batch in results for vec in batch]
        matrix = np.asarray(rows, dtype=np.float64).reshape(len(texts), -1) if rows else np.zeros((0, self.dim))
        if matrix.shape[1] != self.dim:
            raise DimensionMismatch(f"endpoint returned dim {matrix.shape[1]}, expected {self.dim}")
        return l2_normalize(matrix)

    def embed(self, text: str) -> np.ndarray:
        return self.transform([text])[0]


def embedding_text(instance: RelationInstance, unit, variant: str, locale: str = "zh") -> str:
    return f"{dialogue_text(unit, variant, locale)}\nTARGET: {instance.target_pair}"


class RetrievalIndex:
    """Immutable exact-search store of unit vectors keyed by instance id.

    Entries are kept sorted by id, so insertion order never affects results.
    """

    def __init__(self, ids: Sequence[str], vectors: np.ndarray, embedder_name: str = "unknown"):
        vectors = np.asarray(vectors, dtype=np.float32)
        if vectors.ndim != 2 or len(ids) != vectors.shape[0]:
            raise ValueError("ids and vectors disagree in length")
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate ids in index")
        order = sorted(range(len(ids)), key=lambda i: ids[i])
        self.ids: tuple[str, ...] = tuple(ids[i] for i in order)
        self.vectors = vectors[order] if len(order) else vectors
        self.vectors.setflags(write=False)
        self._scoring = self.vectors.astype(np.float64)
        self.dim = int(vectors.shape[1])
        self.embedder_name = embedder_name

    def __len__(self) -> int:
        return len(self.ids)

    def vector(self, instance_id: str) -> np.ndarray:
        return self.vectors[self.ids.index(instance_id)]

    def topk(self, query: np.ndarray, k: int) -> list[tuple[str, float]]:
        return topk(self, query, k)

    def to_dict(self) -> dict:
        return {
            "format": INDEX_FORMAT,
            "version": INDEX_VERSION,
            "dim": self.dim,
            "count": len(self.ids),
            "embedder": self.embedder_name,
            "entries": [{"id": i, "vector": [float(x) for x in v]} for i, v in zip(self.ids, self.vectors)],
        }

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), ensure_ascii=False) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "RetrievalIndex":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if data.get("format") != INDEX_FORMAT or data.get("version") != INDEX_VERSION:
            raise ValueError(f"{path}: not a version-{INDEX_VERSION} retrieval index")
        ids = [e["id"] for e in data["entries"]]
        vecs = np.asarray([e["vector"] for e in data["entries"]], dtype=np.float32).reshape(len(ids), data["dim"])
        if len(ids) != data["count"]:
            raise ValueError(f"{path}: header count {data['count']} != {len(ids)} entries")
        return cls(ids, vecs, data["embedder"])


def build_index(train: Dataset, variant: str, embedder, locale: str = "zh") -> RetrievalIndex:
    """Embed every training instance (dialogue text plus target line)."""
    if not train.instances:
        raise EmptyDataset("cannot index an empty training set")
    texts = [embedding_text(inst, train.unit_of(inst), variant, locale) for inst in train.instances]
    try:
        vectors = embedder.transform(texts)
    except Exception as exc:
        # locate the first failing item for the progress report
        done = 0
        for inst, text in zip(train.instances, texts):
            try:
                embedder.transform([text])
            except Exception as item_exc:
                raise EmbedderFailure(inst.id, done, item_exc) from item_exc
            done += 1
        raise EmbedderFailure(train.instances[0].id, 0, exc) from exc
    return RetrievalIndex([inst.id for inst in train.instances], vectors,
                          getattr(embedder, "name", type(embedder).__name__))


def topk(index: RetrievalIndex, query: np.ndarray, k: int) -> list[tuple[str, float]]:
    """Exact cosine search: score descending, ties by ascending id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    query = np.asarray(query, dtype=np.float64).ravel()
    if query.shape[0] != index.dim:
        raise DimensionMismatch(f"query dim {query.shape[0]} != index dim {index.dim}")
    if not len(index):
        return []
    scores = index._scoring @ query
    # entries are id-sorted, so a stable sort on -score breaks ties by id
    order = np.argsort(-scores, kind="stable")[:k]
    return [(index.ids[i], float(scores[i])) for i in order]


def select_exemplars(index: RetrievalIndex, instance: RelationInstance, k: int, train: Dataset,
                     embedder=None, query_vector: np.ndarray | None = None, exclude_self: bool = True,
                     variant: str = "expanded", unit=None, locale: str = "zh") -> list[Exemplar]:
    """Top-``k`` most similar training instances as prompt exemplars.

    The query is embedded from ``unit`` (defaulting to the instance's unit in
    ``train``) unless ``query_vector`` is given.
    """
    if k == 0:
        return []
    if query_vector is None:
        if embedder is None:
            raise ValueError("need an embedder or a query vector")
        unit = unit if unit is not None else train.unit_of(instance)
        query_vector = embedder.transform([embedding_text(instance, unit, variant, locale)])[0]
    hits = topk(index, query_vector, k + 1 if exclude_self else k)
    chosen = []
    for iid, _ in hits:
        if exclude_self and iid == instance.id:
            continue
        if len(chosen) == k:
            break
        ex = train.instance(iid)
        if ex.gold is None:
            raise MissingGold(iid)
        chosen.append(Exemplar(iid, dialogue_text(train.unit_of(ex), variant, locale), ex.target_pair, ex.gold))
    return chosen


@dataclass(frozen=True)
class EmbedderSpec:
    kind: str = "hash"
    dim: int = 256
    endpoint: str | None = None

    def build(self):
        if self.kind == "hash":
            return HashEmbedder(dim=self.dim)
        if self.kind == "http":
            if not self.endpoint:
                raise ValueError("http embedder needs an endpoint")
            return HttpEmbedder(self.endpoint, self.dim)
        raise ValueError(f"unknown embedder kind {self.kind!r}")
