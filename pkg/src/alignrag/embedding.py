"""Embedding providers, the chunk vector store, and cosine similarity."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

import numpy as np

from .corpus import Chunk
from .errors import (
    DimensionMismatch,
    MissingChunk,
    ParseError,
    ProviderError,
    ZeroVector,
)
from .ngram_index import normalize_tokens


class EmbeddingProvider(Protocol):
    """Deterministic text-to-vector mapping."""

    name: str
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...

    def embed_chunk(self, chunk: Chunk) -> np.ndarray: ...


def _bucket(token: str, seed: int, dimension: int) -> int:
    digest = hashlib.blake2b(
        token.encode("utf-8"), digest_size=8, key=str(seed).encode("utf-8")
    ).digest()
    return int.from_bytes(digest, "big") % dimension


class HashEmbeddingProvider:
    """Feature-hashed token counts, unit-normalized.

    Identical text always maps to the identical vector for a given
    (seed, dimension); text with no tokens maps to a fixed basis vector
    so every embedding has unit norm.
    """

    name = "hash"

    def __init__(self, dimension: int = 64, seed: int = 0) -> None:
        if dimension < 1:
            raise ProviderError(f"dimension must be >= 1, got {dimension}")
        self.dimension = dimension
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def embed(self, text: str) -> np.ndarray:
        cached = self._cache.get(text)
        if cached is not None:
            return cached
        vec = np.zeros(self.dimension, dtype=np.float64)
        tokens = normalize_tokens(text)
        if not tokens:
            vec[0] = 1.0
        else:
            for tok in tokens:
                vec[_bucket(tok, self.seed, self.dimension)] += 1.0
            vec /= np.linalg.norm(vec)
        vec.setflags(write=False)
        self._cache[text] = vec
        return vec

    def embed_chunk(self, chunk: Chunk) -> np.ndarray:
        return self.embed(chunk.text)


class FileVectorProvider:
    """Precomputed vectors read from JSONL, keyed by chunk id.

    Each line holds {"chunk_id": ..., "vector": [...]}. Question or other
    free-text keys may be included as extra lines; lookups are exact.
    """

    name = "file"

    def __init__(self, path: str) -> None:
        self._vectors: dict[str, np.ndarray] = {}
        self.dimension = 0
        with open(path, "r", encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"line {line_no}: {exc.msg}") from exc
                key = record.get("chunk_id")
                vector = record.get("vector")
                if not isinstance(key, str) or not isinstance(vector, list):
                    raise ParseError(f"line {line_no}: need chunk_id and vector")
                arr = np.asarray(vector, dtype=np.float64)
                if self.dimension == 0:
                    self.dimension = arr.shape[0]
                elif arr.shape[0] != self.dimension:
                    raise DimensionMismatch(
                        f"line {line_no}: vector of dim {arr.shape[0]}, "
                        f"expected {self.dimension}"
                    )
                arr.setflags(write=False)
                self._vectors[key] = arr
        if not self._vectors:
            raise ProviderError(f"no vectors found in {path}")

    def embed(self, text: str) -> np.ndarray:
        try:
            return self._vectors[text]
        except KeyError:
            raise ProviderError(f"no precomputed vector for key {text!r}") from None

    def embed_chunk(self, chunk: Chunk) -> np.ndarray:
        try:
            return self._vectors[chunk.chunk_id]
        except KeyError:
            raise ProviderError(
                f"no precomputed vector for chunk {chunk.chunk_id!r}"
            ) from None


@dataclass(frozen=True)
class VectorStore:
    """Chunk-id keyed vectors of one shared dimension."""

    dimension: int
    vectors: dict[str, np.ndarray] = field(default_factory=dict)

    def get(self, chunk_id: str) -> np.ndarray:
        try:
            return self.vectors[chunk_id]
        except KeyError:
            raise MissingChunk(f"chunk {chunk_id!r} not in store") from None

    def __len__(self) -> int:
        return len(self.vectors)


def embed_corpus(provider: EmbeddingProvider, chunks: Iterable[Chunk]) -> VectorStore:
    vectors: dict[str, np.ndarray] = {}
    for chunk in chunks:
        vectors[chunk.chunk_id] = provider.embed_chunk(chunk)
    return VectorStore(dimension=provider.dimension, vectors=vectors)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity, clamped to [-1, 1] against rounding overshoot."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionMismatch(f"shapes {u.shape} and {v.shape} differ")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine undefined for zero-norm vector")
    value = float(np.dot(u, v) / (nu * nv))
    return max(-1.0, min(1.0, value))


def object_similarity(
    store: VectorStore, question_vec: np.ndarray, chunks: Sequence[Chunk]
) -> float:
    """Best cosine between the question and any chunk of one object."""
    if not chunks:
        raise MissingChunk("object has no chunks")
    return max(cosine(question_vec, store.get(c.chunk_id)) for c in chunks)
