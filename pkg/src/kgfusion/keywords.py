"""Top-K keyword extraction by cosine similarity to a document summary vector.

Token representations come from a provider: either vectors computed offline
by any contextual encoder and read from a file, or a centroid surrogate that
averages static per-token embeddings.

Contextual-embedding file layout, repeated per document::

    #doc <doc_id> <n_tokens> <dim>
    S <f1> ... <fdim>
    T <token> <f1> ... <fdim>      (n_tokens rows)
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cmp_to_key
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .text import STOPWORDS

DEFAULT_K = 20


class ContextualFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TokenizedDoc:
    doc_id: str
    tokens: tuple[str, ...]


@dataclass
class TokenEmbeddingDoc:
    doc_id: str
    tokens: list[str]
    token_vectors: np.ndarray
    summary_vector: np.ndarray

    def __post_init__(self):
        self.token_vectors = np.asarray(self.token_vectors, dtype=np.float64).reshape(
            len(self.tokens), -1
        ) if len(self.tokens) else np.zeros((0, len(self.summary_vector)))
        self.summary_vector = np.asarray(self.summary_vector, dtype=np.float64)
        if self.token_vectors.shape[1] != self.summary_vector.shape[0]:
            raise ValueError(f"doc {self.doc_id}: token and summary dims differ")

    @property
    def dim(self):
        return self.summary_vector.shape[0]


@dataclass(frozen=True)
class KeywordSet:
    doc_id: str
    keywords: tuple[tuple[str, float], ...]

    @property
    def tokens(self):
        return [tok for tok, _ in self.keywords]

    def __len__(self):
        return len(self.keywords)


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b / (na * nb))


def _cosines(mat, v):
    norms = np.linalg.norm(mat, axis=1)
    nv = np.linalg.norm(v)
    out = np.zeros(len(mat))
    if nv == 0.0:
        return out
    ok = norms > 0
    out[ok] = (mat[ok] @ v) / (norms[ok] * nv)
    return out


TIE_TOLERANCE = 1e-12


def _by_score_then_position(a, b):
    # proportional vectors have equal cosines up to rounding; treat them as ties
    (sa, pa), (sb, pb) = a[1], b[1]
    if abs(sa - sb) > TIE_TOLERANCE:
        return -1 if sa > sb else 1
    return pa - pb


def extract_keywords(doc: TokenEmbeddingDoc, K: int = DEFAULT_K, stopwords=STOPWORDS) -> KeywordSet:
    """Pick the K tokens most similar to the summary vector.

    Repeated tokens keep their best score. Scores within ``TIE_TOLERANCE``
    count as ties and go to the earlier position.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if not doc.tokens:
        return KeywordSet(doc.doc_id, ())
    sims = _cosines(doc.token_vectors, doc.summary_vector)
    best: dict[str, tuple[float, int]] = {}
    for pos, (tok, s) in enumerate(zip(doc.tokens, sims)):
        if stopwords and tok in stopwords:
            continue
        prev = best.get(tok)
        if prev is None:
            best[tok] = (float(s), pos)
        elif s > prev[0]:
            best[tok] = (float(s), prev[1])
    ranked = sorted(best.items(), key=cmp_to_key(_by_score_then_position))[:K]
    return KeywordSet(doc.doc_id, tuple((tok, score) for tok, (score, _) in ranked))


def centroid_summary(doc: TokenizedDoc, embed: Callable[[str], Optional[np.ndarray]]) -> TokenEmbeddingDoc:
    """Surrogate encoder: static vector per token, summary = their mean.

    Tokens for which ``embed`` returns ``None`` are left out.
    """
    tokens, vecs = [], []
    for tok in doc.tokens:
        v = embed(tok)
        if v is not None:
            tokens.append(tok)
            vecs.append(np.asarray(v, dtype=np.float64))
    if not vecs:
        raise ValueError(f"doc {doc.doc_id}: no token has an embedding")
    mat = np.vstack(vecs)
    return TokenEmbeddingDoc(doc.doc_id, tokens, mat, mat.mean(axis=0))


def load_contextual_embeddings(path) -> dict[str, TokenEmbeddingDoc]:
    path = Path(path)
    docs: dict[str, TokenEmbeddingDoc] = {}
    with path.open(encoding="utf-8") as fh:
        lines = list(enumerate(fh, start=1))
    i = 0

    def floats(lineno, vals, dim):
        if len(vals) != dim:
            raise ContextualFormatError(f"{path}:{lineno}: expected {dim} values, got {len(vals)}")
        try:
            return [float(v) for v in vals]
        except ValueError:
            raise ContextualFormatError(f"{path}:{lineno}: non-numeric value") from None

    while i < len(lines):
        lineno, line = lines[i]
        i += 1
        if not line.strip():
            continue
        head = line.split()
        if head[0] != "#doc" or len(head) != 4:
            raise ContextualFormatError(f"{path}:{lineno}: expected '#doc <id> <n_tokens> <dim>'")
        doc_id, n_tokens, dim = head[1], int(head[2]), int(head[3])
        if i >= len(lines) or not lines[i][1].startswith("S "):
            at = lines[i][0] if i < len(lines) else lineno + 1
            raise ContextualFormatError(f"{path}:{at}: missing summary row for doc {doc_id}")
        s_lineno, s_line = lines[i]
        i += 1
        summary = floats(s_lineno, s_line.split()[1:], dim)
        tokens, vecs = [], []
        for _ in range(n_tokens):
            if i >= len(lines) or not lines[i][1].startswith("T "):
                at = lines[i][0] if i < len(lines) else lines[-1][0] + 1
                raise ContextualFormatError(
                    f"{path}:{at}: doc {doc_id} declares {n_tokens} tokens, found {len(tokens)}"
                )
            t_lineno, t_line = lines[i]
            i += 1
            fields = t_line.split()
            tokens.append(fields[1])
            vecs.append(floats(t_lineno, fields[2:], dim))
        if i < len(lines) and lines[i][1].startswith("T "):
            raise ContextualFormatError(
                f"{path}:{lines[i][0]}: doc {doc_id} has more than {n_tokens} token rows"
            )
        if doc_id in docs:
            raise ContextualFormatError(f"{path}:{lineno}: duplicate doc {doc_id}")
        docs[doc_id] = TokenEmbeddingDoc(
            doc_id, tokens, np.array(vecs).reshape(n_tokens, dim), np.array(summary)
        )
    return docs


def save_contextual_embeddings(docs, path) -> None:
    lines = []
    for doc in docs:
        lines.append(f"#doc {doc.doc_id} {len(doc.tokens)} {doc.dim}")
        lines.append("S " + " ".join(f"{x:.9g}" for x in doc.summary_vector))
        for tok, vec in zip(doc.tokens, doc.token_vectors):
            lines.append(f"T {tok} " + " ".join(f"{x:.9g}" for x in vec))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


class KeywordExtractor(BaseEstimator, TransformerMixin):
    """Stateless transformer from :class:`TokenEmbeddingDoc` to :class:`KeywordSet`.

    Parameters
    ----------
    n_keywords : int, default=20
        Maximum number of keywords kept per document.
    filter_stopwords : bool, default=True
        Drop tokens on the built-in English stopword list.
    """

    def __init__(self, n_keywords=DEFAULT_K, filter_stopwords=True):
        self.n_keywords = n_keywords
        self.filter_stopwords = filter_stopwords

    def fit(self, X=None, y=None):
        if self.n_keywords < 1:
            raise ValueError("n_keywords must be >= 1")
        return self

    def transform(self, X):
        stop = STOPWORDS if self.filter_stopwords else frozenset()
        return [extract_keywords(doc, self.n_keywords, stop) for doc in X]
