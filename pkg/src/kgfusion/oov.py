"""Embeddings for terms missing from an :class:`EmbeddingTable`.

Two strategies are provided:

* prefix approximation -- average the vectors of every in-vocabulary label
  sharing the longest common prefix with the term;
* a character-level LSTM regressor trained to map labels onto their vectors.

CharLSTM model file (text, UTF-8)::

    charlstm-model 1
    chars <json list of characters; index 0 is the unknown bucket>
    shape <vocab> <c_dim> <h_dim> <dim>
    loss <mse|cosine>
    param <name> <rows> <cols>
    <row of cols floats, repr formatting>
    ...

Parameters appear in the order ``char_embed W U b proj proj_bias``; vectors
are written as 1-row matrices. Floats are written with ``repr`` so the round
trip is exact.
"""

from __future__ import annotations

import json
import logging
import math
from bisect import bisect_left
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .embeddings import EmbeddingTable
from .text import normalize_label

logger = logging.getLogger(__name__)

MODEL_MAGIC = "charlstm-model"
MODEL_VERSION = 1
PARAM_NAMES = ("char_embed", "W", "U", "b", "proj", "proj_bias")


class ModelFormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# prefix approximation
# ---------------------------------------------------------------------------


def common_prefix_len(a: str, b: str) -> int:
    n = min(len(a), len(b))
    i = 0
    while i < n and a[i] == b[i]:
        i += 1
    return i


class PrefixIndex:
    """Lexicographically sorted view of an embedding table."""

    def __init__(self, table: EmbeddingTable, minimum_prefix_len: int = 2):
        if len(table) == 0:
            raise ValueError("prefix index needs a non-empty table")
        order = sorted(range(len(table)), key=lambda i: table.labels[i])
        self.labels = [table.labels[i] for i in order]
        self.vectors = table.vectors[order]
        self.minimum_prefix_len = minimum_prefix_len
        self._exact = {label: i for i, label in enumerate(self.labels)}
        self._global_mean = self.vectors.mean(axis=0)

    @property
    def dim(self):
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.labels)

    def longest_prefix(self, term: str) -> int:
        # the longest common prefix is attained next to the insertion point
        pos = bisect_left(self.labels, term)
        best = 0
        for i in (pos - 1, pos):
            if 0 <= i < len(self.labels):
                best = max(best, common_prefix_len(term, self.labels[i]))
        return best

    def prefix_range(self, prefix: str) -> tuple[int, int]:
        lo = bisect_left(self.labels, prefix)
        hi = lo
        while hi < len(self.labels) and self.labels[hi].startswith(prefix):
            hi += 1
        return lo, hi

    def embed(self, term: str) -> np.ndarray:
        i = self._exact.get(term)
        if i is not None:
            return self.vectors[i].copy()
        length = self.longest_prefix(term)
        if length < self.minimum_prefix_len:
            return self._global_mean.copy()
        lo, hi = self.prefix_range(term[:length])
        return self.vectors[lo:hi].mean(axis=0)


def prefix_embed(term: str, index: PrefixIndex) -> np.ndarray:
    return index.embed(term)


# ---------------------------------------------------------------------------
# character LSTM
# ---------------------------------------------------------------------------


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class OovTrainConfig:
    learning_rate: float = 0.5
    epochs: int = 30
    batch_size: int = 16
    gradient_clip_norm: float = 5.0
    seed: int = 0
    c_dim: int = 16
    h_dim: int = 64
    loss: str = "mse"

    def __post_init__(self):
        for name in ("learning_rate", "epochs", "batch_size", "gradient_clip_norm", "c_dim", "h_dim"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.loss not in ("mse", "cosine"):
            raise ValueError("loss must be 'mse' or 'cosine'")


@dataclass
class CharLstmModel:
    """Single-layer LSTM over character embeddings with an affine read-out.

    Gate blocks in ``W`` (c_dim x 4h), ``U`` (h x 4h) and ``b`` (4h) are laid
    out as input, forget, output, candidate.
    """

    chars: list[str]
    char_embed: np.ndarray
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray
    proj: np.ndarray
    proj_bias: np.ndarray
    loss: str = "mse"
    _char_index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self._char_index = {ch: i + 1 for i, ch in enumerate(self.chars)}
        v, c = self.char_embed.shape
        h = self.U.shape[0]
        if v != len(self.chars) + 1:
            raise ValueError("char_embed needs one row per character plus the unknown bucket")
        if self.W.shape != (c, 4 * h) or self.U.shape != (h, 4 * h) or self.b.shape != (4 * h,):
            raise ValueError("inconsistent gate parameter shapes")
        if self.proj.shape[0] != h or self.proj_bias.shape != (self.proj.shape[1],):
            raise ValueError("inconsistent projection shapes")

    @classmethod
    def initialize(cls, chars, dim, c_dim=16, h_dim=64, rng=None, scale=0.1, loss="mse"):
        chars = sorted(set(chars))
        shapes = cls.param_shapes(len(chars) + 1, c_dim, h_dim, dim)
        if rng is None:
            params = {name: np.zeros(shape) for name, shape in shapes.items()}
        else:
            params = {name: rng.uniform(-scale, scale, size=shape) for name, shape in shapes.items()}
        return cls(chars=chars, loss=loss, **params)

    @staticmethod
    def param_shapes(vocab, c_dim, h_dim, dim):
        return {
            "char_embed": (vocab, c_dim),
            "W": (c_dim, 4 * h_dim),
            "U": (h_dim, 4 * h_dim),
            "b": (4 * h_dim,),
            "proj": (h_dim, dim),
            "proj_bias": (dim,),
        }

    @property
    def c_dim(self):
        return self.char_embed.shape[1]

    @property
    def h_dim(self):
        return self.U.shape[0]

    @property
    def dim(self):
        return self.proj.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def encode(self, term: str) -> list[int]:
        return [self._char_index.get(ch, 0) for ch in term]

    def batch_indices(self, terms):
        """Pad character ids into a ``(batch, T)`` array plus lengths."""
        seqs = [self.encode(t) for t in terms]
        if any(len(s) == 0 for s in seqs):
            raise ValueError("cannot embed an empty term")
        T = max(len(s) for s in seqs)
        ids = np.zeros((len(seqs), T), dtype=np.int64)
        for i, s in enumerate(seqs):
            ids[i, : len(s)] = s
        return ids, np.array([len(s) for s in seqs])


def lstm_forward(model: CharLstmModel, ids, lengths):
    """Run the recurrence over a padded batch.

    Padded steps leave the state untouched, so the final hidden state of each
    row is the state after its last real character.
    """
    B, T = ids.shape
    H = model.h_dim
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    steps = []
    for t in range(T):
        mask = (t < lengths).astype(np.float64)[:, None]
        x = model.char_embed[ids[:, t]]
        z = x @ model.W + h @ model.U + model.b
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H : 2 * H])
        o = _sigmoid(z[:, 2 * H : 3 * H])
        g = np.tanh(z[:, 3 * H :])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        steps.append((x, h, c, i, f, o, g, tc, mask))
        c = mask * c_new + (1 - mask) * c
        h = mask * h_new + (1 - mask) * h
    y = h @ model.proj + model.proj_bias
    return y, {"ids": ids, "steps": steps, "h": h}


def lstm_backward(model: CharLstmModel, cache, dy):
    """Gradients of ``sum(dy * y)`` with respect to every parameter."""
    grads = {name: np.zeros_like(p) for name, p in model.params().items()}
    grads["proj"] = cache["h"].T @ dy
    grads["proj_bias"] = dy.sum(axis=0)
    dh = dy @ model.proj.T
    dc = np.zeros_like(dh)
    ids = cache["ids"]
    for t in range(len(cache["steps"]) - 1, -1, -1):
        x, h_prev, c_prev, i, f, o, g, tc, mask = cache["steps"][t]
        # padded rows pass gradients straight through to the previous step
        dh_new = dh * mask
        dc_new = dc * mask
        do = dh_new * tc
        dc_new = dc_new + dh_new * o * (1 - tc * tc)
        di = dc_new * g
        dg = dc_new * i
        df = dc_new * c_prev
        dz = np.concatenate(
            [di * i * (1 - i), df * f * (1 - f), do * o * (1 - o), dg * (1 - g * g)], axis=1
        )
        grads["W"] += x.T @ dz
        grads["U"] += h_prev.T @ dz
        grads["b"] += dz.sum(axis=0)
        np.add.at(grads["char_embed"], ids[:, t], (dz @ model.W.T) * mask)
        dh = dz @ model.U.T + dh * (1 - mask)
        dc = dc_new * f + dc * (1 - mask)
    return grads


def charlstm_forward(term: str, model: CharLstmModel):
    """Embed one term; returns ``(vector, cache)``."""
    if not term:
        raise ValueError("cannot embed an empty term")
    ids, lengths = model.batch_indices([term])
    y, cache = lstm_forward(model, ids, lengths)
    return y[0], cache


def batch_loss(model: CharLstmModel, terms, targets):
    """Mean loss over a batch and its gradient with respect to the outputs."""
    ids, lengths = model.batch_indices(terms)
    y, cache = lstm_forward(model, ids, lengths)
    B, D = y.shape
    if model.loss == "mse":
        diff = y - targets
        loss = float((diff * diff).sum() / (B * D))
        dy = 2.0 * diff / (B * D)
    else:
        yn = np.linalg.norm(y, axis=1, keepdims=True) + 1e-12
        tn = np.linalg.norm(targets, axis=1, keepdims=True) + 1e-12
        cos = (y * targets).sum(axis=1, keepdims=True) / (yn * tn)
        loss = float((1.0 - cos).mean())
        dy = -(targets / (yn * tn) - cos * y / (yn * yn)) / B
    return loss, dy, cache


def loss_and_grads(model: CharLstmModel, terms, targets):
    loss, dy, cache = batch_loss(model, terms, targets)
    return loss, lstm_backward(model, cache, dy)


def clip_gradients(grads: dict, max_norm: float) -> float:
    """Scale ``grads`` in place to a global L2 norm of at most ``max_norm``.

    Returns the norm before clipping.
    """
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def train_charlstm(table: EmbeddingTable, cfg: OovTrainConfig = OovTrainConfig()):
    """Fit a CharLSTM to reproduce ``table`` from its labels.

    Returns ``(model, losses)`` with one mean loss per epoch.
    """
    if len(table) < 10:
        raise ValueError("need at least 10 in-vocabulary entries to train a CharLSTM")
    return _fit_charlstm(
        [normalize_label(label) for label in table.labels], table.vectors, cfg
    )


def _fit_charlstm(terms, targets, cfg: OovTrainConfig):
    rng = np.random.default_rng(cfg.seed)
    chars = {ch for t in terms for ch in t}
    model = CharLstmModel.initialize(
        chars, targets.shape[1], cfg.c_dim, cfg.h_dim, rng=rng, loss=cfg.loss
    )
    targets = np.asarray(targets, dtype=np.float64)
    n = len(terms)
    losses = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, grads = loss_and_grads(model, [terms[i] for i in batch], targets[batch])
            if not math.isfinite(loss):
                raise FloatingPointError(
                    f"CharLSTM loss became non-finite in epoch {epoch + 1} "
                    f"(learning_rate={cfg.learning_rate}); lower the learning rate"
                )
            clip_gradients(grads, cfg.gradient_clip_norm)
            for name, p in model.params().items():
                p -= cfg.learning_rate * grads[name]
            total += loss * len(batch)
        losses.append(total / n)
        logger.debug("charlstm epoch %d/%d loss %.6g", epoch + 1, cfg.epochs, losses[-1])
    return model, losses


def save_charlstm(model: CharLstmModel, path) -> None:
    lines = [
        f"{MODEL_MAGIC} {MODEL_VERSION}",
        "chars " + json.dumps(model.chars, ensure_ascii=False),
        f"shape {model.char_embed.shape[0]} {model.c_dim} {model.h_dim} {model.dim}",
        f"loss {model.loss}",
    ]
    for name, p in model.params().items():
        mat = np.atleast_2d(p)
        lines.append(f"param {name} {mat.shape[0]} {mat.shape[1]}")
        lines.extend(" ".join(repr(float(x)) for x in row) for row in mat)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_charlstm(path) -> CharLstmModel:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").split("\n")
    pos = 0

    def take(prefix):
        nonlocal pos
        if pos >= len(lines) or not lines[pos].startswith(prefix):
            raise ModelFormatError(f"{path}:{pos + 1}: expected '{prefix}' line")
        pos += 1
        return lines[pos - 1][len(prefix):].strip()

    magic = take(MODEL_MAGIC)
    if magic != str(MODEL_VERSION):
        raise ModelFormatError(f"{path}: unsupported model version {magic!r}")
    chars = json.loads(take("chars "))
    vocab, c_dim, h_dim, dim = (int(x) for x in take("shape ").split())
    loss = take("loss ")
    shapes = CharLstmModel.param_shapes(vocab, c_dim, h_dim, dim)
    params = {}
    for name in PARAM_NAMES:
        header = take("param ").split()
        if len(header) != 3 or header[0] != name:
            raise ModelFormatError(f"{path}:{pos}: expected parameter {name}")
        rows, cols = int(header[1]), int(header[2])
        data = []
        for _ in range(rows):
            vals = lines[pos].split()
            if len(vals) != cols:
                raise ModelFormatError(f"{path}:{pos + 1}: expected {cols} values")
            data.append([float(v) for v in vals])
            pos += 1
        arr = np.array(data, dtype=np.float64).reshape(shapes[name])
        params[name] = arr
    return CharLstmModel(chars=chars, loss=loss, **params)


def oov_embed(term: str, table: EmbeddingTable, strategy: str, resource) -> np.ndarray:
    """Exact table vector when present, otherwise the chosen strategy's estimate.

    ``resource`` is a :class:`PrefixIndex` for ``"prefix"`` and a
    :class:`CharLstmModel` for ``"charlstm"``.
    """
    vec = table.get(term)
    if vec is not None:
        return np.array(vec)
    if strategy == "prefix":
        return prefix_embed(term, resource)
    if strategy == "charlstm":
        return charlstm_forward(term, resource)[0]
    raise ValueError(f"unknown OOV strategy {strategy!r}")


class PrefixApproximator(BaseEstimator, TransformerMixin):
    """Fit on an :class:`EmbeddingTable`; transform terms into vectors."""

    def __init__(self, minimum_prefix_len=2):
        self.minimum_prefix_len = minimum_prefix_len

    def fit(self, X: EmbeddingTable, y=None):
        self.table_ = X
        self.index_ = PrefixIndex(X, self.minimum_prefix_len)
        return self

    def transform(self, X):
        check_is_fitted(self, "index_")
        return np.vstack([oov_embed(t, self.table_, "prefix", self.index_) for t in X])


class CharLSTMRegressor(BaseEstimator, RegressorMixin):
    """Character LSTM mapping strings to embedding vectors.

    ``fit(X, y)`` takes a list of strings and a ``(n, dim)`` target matrix;
    :meth:`fit_table` is a shortcut for an :class:`EmbeddingTable`.
    """

    def __init__(self, c_dim=16, h_dim=64, learning_rate=0.5, epochs=30, batch_size=16,
                 gradient_clip_norm=5.0, loss="mse", random_state=0):
        self.c_dim = c_dim
        self.h_dim = h_dim
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.gradient_clip_norm = gradient_clip_norm
        self.loss = loss
        self.random_state = random_state

    def _config(self):
        return OovTrainConfig(
            learning_rate=self.learning_rate, epochs=self.epochs, batch_size=self.batch_size,
            gradient_clip_norm=self.gradient_clip_norm, seed=self.random_state,
            c_dim=self.c_dim, h_dim=self.h_dim, loss=self.loss,
        )

    def fit(self, X, y):
        terms = [normalize_label(t) for t in X]
        y = np.asarray(y, dtype=np.float64)
        if y.ndim != 2 or len(y) != len(terms):
            raise ValueError("y must be a (n_terms, dim) matrix")
        self.model_, self.loss_trace_ = _fit_charlstm(terms, y, self._config())
        return self

    def fit_table(self, table: EmbeddingTable):
        return self.fit(table.labels, table.vectors)

    def predict(self, X):
        check_is_fitted(self, "model_")
        terms = [normalize_label(t) for t in X]
        ids, lengths = self.model_.batch_indices(terms)
        return lstm_forward(self.model_, ids, lengths)[0]
