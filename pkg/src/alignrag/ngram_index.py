"""Token normalization, N-gram extraction, prefix trie, and BM25 scoring.

The same normalization backs the lexical index and the mock language
model tokenizer, so constrained decoding over the trie and BM25 lookups
agree on token identity.
"""

from __future__ import annotations

import json
import math
import string
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Sequence

from .corpus import Chunk
from .errors import ParseError, ValidationError

MAX_NGRAM = 3

_STRIP_CHARS = string.punctuation + string.whitespace


def normalize_tokens(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip edge punctuation, drop empties."""
    tokens = []
    for raw in text.lower().split():
        tok = raw.strip(_STRIP_CHARS)
        if tok:
            tokens.append(tok)
    return tokens


@dataclass(frozen=True)
class NGram:
    """A run of 1..3 normalized tokens."""

    tokens: tuple[str, ...]

    def __post_init__(self) -> None:
        if not 1 <= len(self.tokens) <= MAX_NGRAM:
            raise ValidationError(f"ngram length {len(self.tokens)} out of range")
        for tok in self.tokens:
            if not tok or tok != tok.lower():
                raise ValidationError(f"ngram token {tok!r} not normalized")

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


def extract_ngrams(text: str, max_n: int = MAX_NGRAM) -> set[NGram]:
    """All 1..max_n token windows over the normalized text."""
    tokens = normalize_tokens(text)
    grams: set[NGram] = set()
    for n in range(1, max_n + 1):
        for i in range(len(tokens) - n + 1):
            grams.add(NGram(tokens=tuple(tokens[i : i + n])))
    return grams


class _TrieNode:
    __slots__ = ("children", "terminal")

    def __init__(self) -> None:
        self.children: dict[str, _TrieNode] = {}
        self.terminal = False


class NGramTrie:
    """Prefix trie over N-gram token sequences.

    valid_continuations() is the masking surface used by the constrained
    decoder: an unknown prefix yields no continuations and no terminal.
    """

    def __init__(self) -> None:
        self._root = _TrieNode()
        self._size = 0

    def add(self, ngram: NGram) -> None:
        node = self._root
        for tok in ngram.tokens:
            node = node.children.setdefault(tok, _TrieNode())
        if not node.terminal:
            node.terminal = True
            self._size += 1

    def __len__(self) -> int:
        return self._size

    def __contains__(self, ngram: NGram) -> bool:
        node = self._walk(ngram.tokens)
        return node is not None and node.terminal

    def _walk(self, prefix: Sequence[str]) -> Optional[_TrieNode]:
        node = self._root
        for tok in prefix:
            node = node.children.get(tok)
            if node is None:
                return None
        return node

    def valid_continuations(self, prefix: Sequence[str]) -> tuple[set[str], bool]:
        """Next tokens reachable from prefix, and whether prefix is terminal."""
        node = self._walk(prefix)
        if node is None:
            return set(), False
        return set(node.children), node.terminal

    def ngrams(self) -> Iterator[NGram]:
        """Enumerate stored N-grams in lexicographic token order."""

        def walk(node: _TrieNode, path: tuple[str, ...]) -> Iterator[NGram]:
            if node.terminal:
                yield NGram(tokens=path)
            for tok in sorted(node.children):
                yield from walk(node.children[tok], path + (tok,))

        yield from walk(self._root, ())


def build_trie(ngrams: Iterable[NGram]) -> NGramTrie:
    trie = NGramTrie()
    for gram in ngrams:
        trie.add(gram)
    return trie


def corpus_ngrams(chunks: Iterable[Chunk], max_n: int = MAX_NGRAM) -> set[NGram]:
    grams: set[NGram] = set()
    for chunk in chunks:
        grams |= extract_ngrams(chunk.text, max_n=max_n)
    return grams


@dataclass
class Bm25Index:
    """Okapi BM25 statistics over chunk texts."""

    k1: float = 1.2
    b: float = 0.75
    doc_len: dict[str, int] = field(default_factory=dict)
    postings: dict[str, dict[str, int]] = field(default_factory=dict)
    avgdl: float = 0.0

    @property
    def size(self) -> int:
        return len(self.doc_len)

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        n = self.size
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))


def build_bm25(chunks: Iterable[Chunk], k1: float = 1.2, b: float = 0.75) -> Bm25Index:
    index = Bm25Index(k1=k1, b=b)
    for chunk in chunks:
        tokens = normalize_tokens(chunk.text)
        if chunk.chunk_id in index.doc_len:
            raise ValidationError(f"duplicate chunk id {chunk.chunk_id!r}")
        index.doc_len[chunk.chunk_id] = len(tokens)
        for term, freq in Counter(tokens).items():
            index.postings.setdefault(term, {})[chunk.chunk_id] = freq
    if index.doc_len:
        index.avgdl = sum(index.doc_len.values()) / len(index.doc_len)
    return index


def bm25_search(
    index: Bm25Index, query_terms: Sequence[str], top_k: Optional[int] = None
) -> list[tuple[str, float]]:
    """Score chunks against the query terms; matching chunks only.

    Results are sorted by descending score, ties by chunk id. A query
    with no indexed term returns an empty list.
    """
    if top_k is not None and top_k < 1:
        raise ValidationError(f"top_k must be >= 1, got {top_k}")
    scores: dict[str, float] = {}
    for term in query_terms:
        posting = index.postings.get(term)
        if not posting:
            continue
        idf = index.idf(term)
        for chunk_id, freq in posting.items():
            dl = index.doc_len[chunk_id]
            norm = freq + index.k1 * (1.0 - index.b + index.b * dl / index.avgdl)
            scores[chunk_id] = scores.get(chunk_id, 0.0) + idf * freq * (
                index.k1 + 1.0
            ) / norm
    ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    return ranked if top_k is None else ranked[:top_k]


INDEX_FORMAT = "alignrag-index-v1"


def save_index(
    path: str, trie: NGramTrie, bm25: Bm25Index, chunk_units: int
) -> None:
    """Persist the lexical index as deterministic JSON."""
    snapshot = {
        "format": INDEX_FORMAT,
        "chunk_units": chunk_units,
        "ngrams": [list(g.tokens) for g in trie.ngrams()],
        "bm25": {
            "k1": bm25.k1,
            "b": bm25.b,
            "doc_len": dict(sorted(bm25.doc_len.items())),
            "postings": {
                term: dict(sorted(posting.items()))
                for term, posting in sorted(bm25.postings.items())
            },
        },
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(snapshot, handle, sort_keys=True, separators=(",", ":"))
        handle.write("\n")


def load_index(path: str) -> tuple[NGramTrie, Bm25Index, int]:
    with open(path, "r", encoding="utf-8") as handle:
        try:
            snapshot = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ParseError(f"index file {path}: {exc.msg}") from exc
    if snapshot.get("format") != INDEX_FORMAT:
        raise ParseError(
            f"index file {path}: unsupported format {snapshot.get('format')!r}"
        )
    trie = build_trie(NGram(tokens=tuple(toks)) for toks in snapshot["ngrams"])
    raw = snapshot["bm25"]
    bm25 = Bm25Index(
        k1=float(raw["k1"]),
        b=float(raw["b"]),
        doc_len={cid: int(n) for cid, n in raw["doc_len"].items()},
        postings={
            term: {cid: int(f) for cid, f in posting.items()}
            for term, posting in raw["postings"].items()
        },
    )
    if bm25.doc_len:
        bm25.avgdl = sum(bm25.doc_len.values()) / len(bm25.doc_len)
    return trie, bm25, int(snapshot["chunk_units"])
