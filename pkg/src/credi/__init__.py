"""Dialogue-based, three-dimension character relationship extraction from novels."""
from __future__ import annotations

__version__ = "0.1.0"

from credi.corpus import Dataset, Dimension, RelationInstance, RelationLabel, load_dataset  # noqa: E402
from credi.estimator import RelationExtractor  # noqa: E402
from credi.retrieval import HashEmbedder  # noqa: E402

__all__ = ["Dataset", "Dimension", "HashEmbedder", "RelationExtractor", "RelationInstance",
           "RelationLabel", "__version__", "load_dataset"]
