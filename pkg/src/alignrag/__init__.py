"""Aligned retrieval over mixed table/passage collections."""

from .config import Config, load_config
from .corpus import Chunk, Corpus, DataObject, ObjectKind, build_corpus, load_corpus
from .pipeline import ArmResult, RetrievalEngine

__version__ = "0.1.0"

__all__ = [
    "ArmResult",
    "Chunk",
    "Config",
    "Corpus",
    "DataObject",
    "ObjectKind",
    "RetrievalEngine",
    "build_corpus",
    "load_config",
    "load_corpus",
    "__version__",
]
