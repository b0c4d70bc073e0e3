"""Knowledge-embedding MaxSim scoring fused with BM25.

For a query with term vectors ``v_q`` and a document keyword set with
vectors ``v_d``, the knowledge score is ``sum_i max_j v_q[i] . v_d[j]``. The
final score adds the BM25 score when the document is a BM25 candidate (shares
at least one query token) and is the knowledge score alone otherwise.
Documents that only reach the BM25 branch enter with a knowledge score of 0.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .bm25 import Bm25Params, InvertedIndex, bm25_topk, build_index
from .embeddings import EmbeddingTable
from .keywords import (
    KeywordSet,
    TokenizedDoc,
    centroid_summary,
    extract_keywords,
)
from .kg import KnowledgeGraph, link_term
from .oov import CharLstmModel, PrefixIndex, oov_embed
from .text import STOPWORDS, normalize_label, tokenize

logger = logging.getLogger(__name__)

OOV_STRATEGIES = ("prefix", "charlstm", None)


class EmptyQueryError(ValueError):
    pass


@dataclass
class DocKeywordEmbeddings:
    doc_id: str
    tokens: list[str]
    vectors: np.ndarray

    def __len__(self):
        return len(self.tokens)


@dataclass
class QueryEmbedding:
    query_id: str
    tokens: list[str]
    vectors: np.ndarray


@dataclass(frozen=True)
class ScoredDoc:
    doc_id: str
    kg_score: float
    bm25_score: Optional[float]
    fused: float


def maxsim_score(q: QueryEmbedding, d: DocKeywordEmbeddings) -> float:
    """Sum over query vectors of the best dot product against the keyword vectors."""
    qv = np.asarray(q.vectors, dtype=np.float64)
    dv = np.asarray(d.vectors, dtype=np.float64)
    if len(dv) == 0 or len(qv) == 0:
        return 0.0
    if qv.shape[1] != dv.shape[1]:
        raise ValueError(f"dimension mismatch: query {qv.shape[1]} vs keywords {dv.shape[1]}")
    # an explicit reduction keeps each dot product independent of the matrix
    # shapes, so adding a keyword can never perturb the existing similarities
    sims = (qv[:, None, :] * dv[None, :, :]).sum(axis=2)
    return float(sims.max(axis=1).sum())


class TermEmbedder:
    """Resolve a term to a vector: KG-linked concept first, then the OOV strategy.

    With ``strategy=None`` only linked, embedded concepts resolve; anything
    else returns ``None``.
    """

    def __init__(self, graph: KnowledgeGraph, table: EmbeddingTable, strategy="prefix",
                 oov_model: Optional[CharLstmModel] = None, minimum_prefix_len=2):
        if strategy not in OOV_STRATEGIES:
            raise ValueError(f"unknown OOV strategy {strategy!r}")
        if strategy == "charlstm" and oov_model is None:
            raise ValueError("charlstm strategy needs a trained model")
        self.graph = graph
        self.table = table
        self.strategy = strategy
        if strategy == "prefix":
            self.resource = PrefixIndex(table, minimum_prefix_len)
        else:
            self.resource = oov_model
        self._cache: dict[str, Optional[np.ndarray]] = {}

    def linked_vector(self, term):
        cid = link_term(term, self.graph)
        if cid is None:
            return None
        return self.table.get(self.graph.label(cid))

    def __call__(self, term: str) -> Optional[np.ndarray]:
        key = normalize_label(term)
        if key in self._cache:
            return self._cache[key]
        vec = self.linked_vector(key)
        if vec is not None:
            vec = np.array(vec)
        elif self.strategy is not None and key:
            vec = oov_embed(key, self.table, self.strategy, self.resource)
        self._cache[key] = vec
        return vec


def embed_query(query_text: str, embedder: TermEmbedder, query_id: str = "q",
                stopwords=STOPWORDS) -> QueryEmbedding:
    tokens, vecs = [], []
    for tok in tokenize(query_text):
        if stopwords and tok in stopwords:
            continue
        v = embedder(tok)
        if v is not None:
            tokens.append(tok)
            vecs.append(v)
    if not tokens:
        raise EmptyQueryError(f"empty query {query_id!r}: no embeddable non-stopword tokens")
    return QueryEmbedding(query_id, tokens, np.vstack(vecs))


def _sort_key(sd: ScoredDoc):
    return (-sd.fused, sd.doc_id)


def fuse(kg_scores: dict, bm25_candidates: dict) -> list[ScoredDoc]:
    """Combine both branches; sorted by fused score, ties by doc id."""
    out = []
    for doc_id, s in kg_scores.items():
        s2 = bm25_candidates.get(doc_id)
        out.append(ScoredDoc(doc_id, float(s), s2, float(s) + s2 if s2 is not None else float(s)))
    for doc_id, s2 in bm25_candidates.items():
        if doc_id not in kg_scores:
            out.append(ScoredDoc(doc_id, 0.0, s2, float(s2)))
    out.sort(key=_sort_key)
    return out


def minmax(scores: dict) -> dict:
    if not scores:
        return {}
    lo, hi = min(scores.values()), max(scores.values())
    if hi == lo:
        return {k: 1.0 for k in scores}
    return {k: (v - lo) / (hi - lo) for k, v in scores.items()}


@dataclass
class KeywordMatrix:
    """All documents' keyword vectors stacked for batched MaxSim."""

    doc_ids: list[str]
    offsets: np.ndarray
    vectors: np.ndarray
    tokens: list[str] = field(default_factory=list)

    @classmethod
    def from_docs(cls, docs: list[DocKeywordEmbeddings], dim: int):
        docs = [d for d in docs if len(d)]
        offsets = np.zeros(len(docs) + 1, dtype=np.int64)
        for i, d in enumerate(docs):
            offsets[i + 1] = offsets[i] + len(d)
        vectors = np.vstack([d.vectors for d in docs]) if docs else np.zeros((0, dim))
        tokens = [t for d in docs for t in d.tokens]
        return cls([d.doc_id for d in docs], offsets, vectors, tokens)

    def scores(self, qv: np.ndarray) -> np.ndarray:
        if not self.doc_ids:
            return np.zeros(0)
        sims = qv @ self.vectors.T
        return np.maximum.reduceat(sims, self.offsets[:-1], axis=1).sum(axis=0)

    def doc(self, i) -> DocKeywordEmbeddings:
        lo, hi = self.offsets[i], self.offsets[i + 1]
        return DocKeywordEmbeddings(self.doc_ids[i], self.tokens[lo:hi], self.vectors[lo:hi])


class FusionRanker(BaseEstimator):
    """Zero-shot ranker: keyword MaxSim over KG embeddings plus BM25.

    Parameters
    ----------
    n_keywords : int, default=20
        Keywords kept per document.
    oov_strategy : {"prefix", "charlstm", None}, default="prefix"
        How terms without a concept embedding are embedded. ``None`` keeps
        only KG-linked terms.
    run_depth : int, default=1000
        Ranked list length, also the BM25 candidate depth.
    k1, b : float
        BM25 parameters.
    normalize_scores : bool, default=False
        Min-max normalize each branch per query before adding.
    l2_normalize : bool, default=False
        Unit-normalize query and keyword vectors (cosine instead of dot).
    use_bm25 : bool, default=True
        ``False`` gives the knowledge-embedding score alone.
    filter_stopwords : bool, default=True
    minimum_prefix_len : int, default=2
    """

    def __init__(self, n_keywords=20, oov_strategy="prefix", run_depth=1000, k1=1.2, b=0.75,
                 normalize_scores=False, l2_normalize=False, use_bm25=True,
                 filter_stopwords=True, minimum_prefix_len=2):
        self.n_keywords = n_keywords
        self.oov_strategy = oov_strategy
        self.run_depth = run_depth
        self.k1 = k1
        self.b = b
        self.normalize_scores = normalize_scores
        self.l2_normalize = l2_normalize
        self.use_bm25 = use_bm25
        self.filter_stopwords = filter_stopwords
        self.minimum_prefix_len = minimum_prefix_len

    # -- fitting ------------------------------------------------------------

    def _stopwords(self):
        return STOPWORDS if self.filter_stopwords else frozenset()

    def _make_embedder(self, graph, table, oov_model):
        return TermEmbedder(graph, table, self.oov_strategy, oov_model, self.minimum_prefix_len)

    def fit(self, X, y=None, *, graph: KnowledgeGraph, table: EmbeddingTable,
            oov_model: Optional[CharLstmModel] = None, contextual=None):
        """Index a corpus of ``(doc_id, text)`` pairs.

        ``contextual`` optionally maps doc ids to precomputed
        :class:`~kgfusion.keywords.TokenEmbeddingDoc`; other documents use the
        centroid surrogate over the term embedder.
        """
        if self.n_keywords < 1 or self.run_depth < 1:
            raise ValueError("n_keywords and run_depth must be >= 1")
        corpus = [(str(d), t) for d, t in X]
        self.params_ = Bm25Params(self.k1, self.b)
        self.index_ = build_index(corpus)
        self.embedder_ = self._make_embedder(graph, table, oov_model)
        stop = self._stopwords()

        keyword_sets = []
        for doc_id, text in corpus:
            if contextual is not None and doc_id in contextual:
                kws = extract_keywords(contextual[doc_id], self.n_keywords, stop)
            else:
                tokens = tuple(tokenize(text))
                try:
                    doc = centroid_summary(TokenizedDoc(doc_id, tokens), self.embedder_)
                    kws = extract_keywords(doc, self.n_keywords, stop)
                except ValueError:
                    kws = KeywordSet(doc_id, ())
            keyword_sets.append(kws)
        self.keyword_sets_ = {k.doc_id: k for k in keyword_sets}
        self._resolve_keywords()
        return self

    def _resolve_keywords(self):
        docs = []
        self.unembedded_docs_ = []
        for doc_id, kws in self.keyword_sets_.items():
            toks, vecs = [], []
            for tok in kws.tokens:
                v = self.embedder_(tok)
                if v is not None:
                    toks.append(tok)
                    vecs.append(v)
            if not toks:
                self.unembedded_docs_.append(doc_id)
                logger.warning("doc %s has no embeddable keywords; BM25 only", doc_id)
            vec = np.vstack(vecs) if vecs else np.zeros((0, self.embedder_.table.dim))
            docs.append(DocKeywordEmbeddings(doc_id, toks, vec))
        self._set_doc_embeddings(docs)

    def _set_doc_embeddings(self, docs):
        self.doc_embeddings_ = {d.doc_id: d for d in docs}
        mat = KeywordMatrix.from_docs(docs, self.embedder_.table.dim)
        if self.l2_normalize and len(mat.vectors):
            norms = np.linalg.norm(mat.vectors, axis=1, keepdims=True)
            mat.vectors = mat.vectors / np.where(norms > 0, norms, 1.0)
        self.keyword_matrix_ = mat

    # -- scoring ------------------------------------------------------------

    def embed_query(self, query: str, query_id: str = "q") -> QueryEmbedding:
        check_is_fitted(self, "index_")
        qe = embed_query(query, self.embedder_, query_id, self._stopwords())
        if self.l2_normalize:
            norms = np.linalg.norm(qe.vectors, axis=1, keepdims=True)
            qe.vectors = qe.vectors / np.where(norms > 0, norms, 1.0)
        return qe

    def kg_scores(self, qe: QueryEmbedding) -> dict[str, float]:
        mat = self.keyword_matrix_
        return dict(zip(mat.doc_ids, mat.scores(qe.vectors).tolist()))

    def bm25_candidates(self, query: str) -> dict[str, float]:
        if not self.use_bm25:
            return {}
        return dict(bm25_topk(tokenize(query), self.index_, self.params_, self.run_depth))

    def search(self, query: str, query_id: str = "q") -> list[ScoredDoc]:
        """Rank documents for one query (at most ``run_depth`` entries)."""
        check_is_fitted(self, "index_")
        kg = self.kg_scores(self.embed_query(query, query_id))
        lex = self.bm25_candidates(query)
        if self.normalize_scores:
            kg, lex = minmax(kg), minmax(lex)
        return fuse(kg, lex)[: self.run_depth]

    def predict(self, X):
        """Rank ``(query_id, text)`` pairs; returns ``{query_id: [ScoredDoc, ...]}``."""
        return {qid: self.search(text, qid) for qid, text in X}

    def explain(self, query: str, doc_id: str):
        """For each query term, the document keyword giving the maximum dot product."""
        qe = self.embed_query(query)
        d = self.doc_embeddings_.get(doc_id)
        if d is None or not len(d):
            return [(tok, None, None) for tok in qe.tokens]
        vecs = d.vectors
        if self.l2_normalize:
            norms = np.linalg.norm(vecs, axis=1, keepdims=True)
            vecs = vecs / np.where(norms > 0, norms, 1.0)
        sims = qe.vectors @ vecs.T
        best = sims.argmax(axis=1)
        return [(tok, d.tokens[j], float(sims[i, j])) for i, (tok, j) in enumerate(zip(qe.tokens, best))]

    # -- persistence --------------------------------------------------------

    def save(self, directory) -> None:
        check_is_fitted(self, "index_")
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.index_.save(directory / "bm25.json")
        rows = []
        vecs = []
        for doc_id, kws in self.keyword_sets_.items():
            d = self.doc_embeddings_[doc_id]
            rows.append({"doc_id": doc_id, "keywords": [[t, s] for t, s in kws.keywords],
                         "resolved": d.tokens})
            vecs.append(d.vectors)
        with (directory / "keywords.jsonl").open("w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
        dim = self.embedder_.table.dim
        np.save(directory / "keyword_vectors.npy", np.vstack(vecs) if vecs else np.zeros((0, dim)))
        (directory / "params.json").write_text(json.dumps(self.get_params(), sort_keys=True))

    @classmethod
    def load(cls, directory, *, graph, table, oov_model=None, **overrides):
        directory = Path(directory)
        params = json.loads((directory / "params.json").read_text())
        params.update(overrides)
        self = cls(**params)
        self.params_ = Bm25Params(self.k1, self.b)
        self.index_ = InvertedIndex.load(directory / "bm25.json")
        self.embedder_ = self._make_embedder(graph, table, oov_model)
        all_vecs = np.load(directory / "keyword_vectors.npy")
        self.keyword_sets_ = {}
        docs = []
        self.unembedded_docs_ = []
        pos = 0
        with (directory / "keywords.jsonl").open(encoding="utf-8") as fh:
            for line in fh:
                row = json.loads(line)
                doc_id = row["doc_id"]
                self.keyword_sets_[doc_id] = KeywordSet(
                    doc_id, tuple((t, float(s)) for t, s in row["keywords"])
                )
                n = len(row["resolved"])
                if n == 0:
                    self.unembedded_docs_.append(doc_id)
                docs.append(DocKeywordEmbeddings(doc_id, row["resolved"], all_vecs[pos:pos + n]))
                pos += n
        self._set_doc_embeddings(docs)
        return self
