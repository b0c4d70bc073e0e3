"""Okapi BM25 over an in-memory inverted index.

For query tokens ``q_1..q_n`` (duplicates counted per occurrence)::

    score(q, d) = sum_t idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))
    idf(t)      = ln((N - df + 0.5) / (df + 0.5) + 1)

Terms missing from ``d`` add nothing. The +1 inside the logarithm keeps every
idf positive, so scores are never negative.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_left
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .text import tokenize


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self):
        if self.k1 < 0:
            raise ValueError("k1 must be >= 0")
        if not 0 <= self.b <= 1:
            raise ValueError("b must lie in [0, 1]")


class InvertedIndex:
    """Postings sorted by doc id plus document lengths."""

    def __init__(self, postings, doc_lengths):
        self.postings: dict[str, list[tuple[str, int]]] = postings
        self.doc_lengths: dict[str, int] = doc_lengths
        self.doc_count = len(doc_lengths)
        self.avg_doc_length = (
            sum(doc_lengths.values()) / self.doc_count if self.doc_count else 0.0
        )
        self._posting_ids = {t: [d for d, _ in p] for t, p in postings.items()}

    def df(self, term) -> int:
        return len(self.postings.get(term, ()))

    def tf(self, term, doc_id) -> int:
        ids = self._posting_ids.get(term)
        if not ids:
            return 0
        i = bisect_left(ids, doc_id)
        if i < len(ids) and ids[i] == doc_id:
            return self.postings[term][i][1]
        return 0

    def idf(self, term) -> float:
        df = self.df(term)
        n = self.doc_count
        return math.log((n - df + 0.5) / (df + 0.5) + 1.0)

    def __contains__(self, doc_id):
        return doc_id in self.doc_lengths

    def to_dict(self):
        return {
            "doc_lengths": self.doc_lengths,
            "postings": {t: [[d, tf] for d, tf in p] for t, p in self.postings.items()},
        }

    @classmethod
    def from_dict(cls, data):
        postings = {t: [(d, int(tf)) for d, tf in p] for t, p in data["postings"].items()}
        return cls(postings, {d: int(n) for d, n in data["doc_lengths"].items()})

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def build_index(corpus) -> InvertedIndex:
    """Index ``(doc_id, text)`` pairs."""
    acc: dict[str, list[tuple[str, int]]] = defaultdict(list)
    doc_lengths: dict[str, int] = {}
    for doc_id, text in corpus:
        if doc_id in doc_lengths:
            raise ValueError(f"duplicate doc_id {doc_id!r}")
        tokens = tokenize(text)
        doc_lengths[doc_id] = len(tokens)
        for term, tf in Counter(tokens).items():
            acc[term].append((doc_id, tf))
    if not doc_lengths:
        raise ValueError("cannot index an empty corpus")
    postings = {t: sorted(p) for t, p in sorted(acc.items())}
    return InvertedIndex(postings, dict(sorted(doc_lengths.items())))


def _term_weight(tf, dl, idf, index, params):
    norm = params.k1 * (1.0 - params.b + params.b * dl / index.avg_doc_length) if index.avg_doc_length else params.k1
    return idf * tf * (params.k1 + 1.0) / (tf + norm)


def bm25_score(query_tokens, doc_id, index: InvertedIndex, params: Bm25Params = Bm25Params()) -> float:
    if doc_id not in index:
        raise KeyError(f"unknown doc_id {doc_id!r}")
    dl = index.doc_lengths[doc_id]
    score = 0.0
    for term in query_tokens:
        tf = index.tf(term, doc_id)
        if tf:
            score += _term_weight(tf, dl, index.idf(term), index, params)
    return score


def bm25_topk(query_tokens, index: InvertedIndex, params: Bm25Params = Bm25Params(), k: int = 1000):
    """Documents sharing at least one query token, best first (ties by doc id)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scores: dict[str, float] = {}
    for term in query_tokens:
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        for doc_id, tf in plist:
            w = _term_weight(tf, index.doc_lengths[doc_id], idf, index, params)
            scores[doc_id] = scores.get(doc_id, 0.0) + w
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:k]


def read_corpus(path):
    """Yield ``(doc_id, text)`` from a JSON-lines corpus with ``_id``, ``title``, ``text``."""
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                doc_id = str(obj["_id"])
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"{path}:{lineno}: bad corpus record ({exc})") from None
            title = obj.get("title") or ""
            text = obj.get("text") or ""
            yield doc_id, f"{title} {text}".strip()


class BM25Retriever(BaseEstimator):
    """Estimator wrapper: ``fit`` indexes a corpus, ``predict`` ranks queries."""

    def __init__(self, k1=1.2, b=0.75, top_k=1000):
        self.k1 = k1
        self.b = b
        self.top_k = top_k

    def fit(self, X, y=None):
        """X is an iterable of ``(doc_id, text)`` pairs."""
        self.params_ = Bm25Params(self.k1, self.b)
        self.index_ = build_index(X)
        return self

    def score(self, query: str, doc_id: str) -> float:
        check_is_fitted(self, "index_")
        return bm25_score(tokenize(query), doc_id, self.index_, self.params_)

    def predict(self, X):
        """Rank each query string; returns one ``[(doc_id, score), ...]`` list per query."""
        check_is_fitted(self, "index_")
        if isinstance(X, str):
            X = [X]
        return [bm25_topk(tokenize(q), self.index_, self.params_, self.top_k) for q in X]
