"""Skip-gram with negative sampling over random-walk corpora.

Each (center, context) pair inside the window contributes the surrogate
objective ``log s(u_o . v_c) + sum_k log s(-u_k . v_c)`` where ``v`` are input
(center) vectors, ``u`` output (context) vectors and ``s`` the logistic
function. Training is plain SGD ascent on that objective with a linearly
decaying learning rate; the reported loss is its negation averaged over pairs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numba
import numpy as np

from .embeddings import EmbeddingTable

logger = logging.getLogger(__name__)

_CHUNK_WALKS = 2048


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 128
    window: int = 5
    negatives: int = 5
    learning_rate: float = 0.025
    min_learning_rate: float = 1e-4
    epochs: int = 5
    seed: int = 0
    ns_exponent: float = 0.75

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.negatives < 1 or self.epochs < 1:
            raise ValueError("negatives and epochs must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


def log_sigmoid(x):
    """Numerically stable ``log(1 / (1 + exp(-x)))``."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, -np.log1p(np.exp(-np.abs(x))), x - np.log1p(np.exp(-np.abs(x))))


def pair_objective(center, context, negatives) -> float:
    """Negative-sampling objective for one center vector, one context vector
    and a ``(k, dim)`` stack of noise vectors."""
    pos = log_sigmoid(center @ context)
    neg = log_sigmoid(-(negatives @ center)).sum()
    return float(pos + neg)


def pair_gradients(center, context, negatives):
    """Analytic gradients of :func:`pair_objective`.

    Returns ``(d_center, d_context, d_negatives)``.
    """
    s_pos = 1.0 / (1.0 + np.exp(-(center @ context)))
    s_neg = 1.0 / (1.0 + np.exp(-(negatives @ center)))
    d_center = (1.0 - s_pos) * context - s_neg @ negatives
    d_context = (1.0 - s_pos) * center
    d_negatives = -s_neg[:, None] * center[None, :]
    return d_center, d_context, d_negatives


def skipgram_pairs(walk, window: int):
    """Yield (center, context) pairs in walk order."""
    n = len(walk)
    for i in range(n):
        for j in range(max(0, i - window), min(n, i + window + 1)):
            if j != i:
                yield walk[i], walk[j]


@numba.njit(cache=True)
def _pairs_kernel(flat, offsets, window):
    total = 0
    for w in range(offsets.shape[0] - 1):
        n = offsets[w + 1] - offsets[w]
        for i in range(n):
            lo = max(0, i - window)
            hi = min(n, i + window + 1)
            total += hi - lo - 1
    centers = np.empty(total, dtype=np.int64)
    contexts = np.empty(total, dtype=np.int64)
    k = 0
    for w in range(offsets.shape[0] - 1):
        base = offsets[w]
        n = offsets[w + 1] - base
        for i in range(n):
            for j in range(max(0, i - window), min(n, i + window + 1)):
                if j != i:
                    centers[k] = flat[base + i]
                    contexts[k] = flat[base + j]
                    k += 1
    return centers, contexts


@numba.njit(cache=True)
def _log_sigmoid_scalar(x):
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


@numba.njit(cache=True)
def _sgns_update(w_in, w_out, centers, contexts, negs, lr0, lr_min, step0, total_steps):
    dim = w_in.shape[1]
    grad_in = np.zeros(dim)
    loss = 0.0
    for k in range(centers.shape[0]):
        lr = lr0 - (lr0 - lr_min) * (step0 + k) / total_steps
        if lr < lr_min:
            lr = lr_min
        c = centers[k]
        o = contexts[k]
        for d in range(dim):
            grad_in[d] = 0.0

        dot = 0.0
        for d in range(dim):
            dot += w_in[c, d] * w_out[o, d]
        loss -= _log_sigmoid_scalar(dot)
        g = 1.0 - 1.0 / (1.0 + math.exp(-dot))
        for d in range(dim):
            grad_in[d] += g * w_out[o, d]
            w_out[o, d] += lr * g * w_in[c, d]

        for m in range(negs.shape[1]):
            n = negs[k, m]
            if n == o:
                continue
            dot = 0.0
            for d in range(dim):
                dot += w_in[c, d] * w_out[n, d]
            loss -= _log_sigmoid_scalar(-dot)
            g = -1.0 / (1.0 + math.exp(-dot))
            for d in range(dim):
                grad_in[d] += g * w_out[n, d]
                w_out[n, d] += lr * g * w_in[c, d]

        for d in range(dim):
            w_in[c, d] += lr * grad_in[d]
    return loss


def sgns_step(w_in, w_out, center, context, negatives, lr):
    """Apply one in-place pair update with the compiled kernel (used by tests)."""
    negs = np.asarray([negatives], dtype=np.int64)
    return _sgns_update(
        w_in, w_out,
        np.array([center], dtype=np.int64), np.array([context], dtype=np.int64),
        negs, float(lr), float(lr), 0, 1,
    )


def _encode_walks(walks):
    vocab: dict = {}
    flat = []
    offsets = [0]
    for walk in walks:
        for tok in walk:
            idx = vocab.get(tok)
            if idx is None:
                idx = vocab[tok] = len(vocab)
            flat.append(idx)
        offsets.append(len(flat))
    return vocab, np.asarray(flat, dtype=np.int64), np.asarray(offsets, dtype=np.int64)


def _epoch_pairs(flat, offsets, order, window):
    for start in range(0, len(order), _CHUNK_WALKS):
        idx = order[start:start + _CHUNK_WALKS]
        lens = offsets[idx + 1] - offsets[idx]
        sub = np.concatenate([[0], np.cumsum(lens)])
        chunk = np.concatenate([flat[offsets[i]:offsets[i + 1]] for i in idx])
        yield _pairs_kernel(chunk, sub, window)


def train_skipgram(walks, cfg: TrainConfig = TrainConfig()):
    """Train skip-gram vectors on token sequences.

    Returns
    -------
    table : EmbeddingTable
        One row per distinct token, in first-appearance order.
    losses : list of float
        Mean of the per-pair losses incurred during each epoch (each taken
        just before that pair's update).
    """
    walks = [list(w) for w in walks]
    if not walks or not any(walks):
        raise ValueError("no walks to train on")
    vocab, flat, offsets = _encode_walks(walks)
    n_vocab = len(vocab)
    rng = np.random.default_rng(cfg.seed)

    w_in = (rng.random((n_vocab, cfg.dim)) - 0.5) / cfg.dim
    w_out = np.zeros((n_vocab, cfg.dim))

    counts = np.bincount(flat, minlength=n_vocab).astype(np.float64)
    noise_cum = np.cumsum(counts ** cfg.ns_exponent)

    lengths = np.diff(offsets)
    pairs_per_walk = np.array(
        [sum(min(n, i + cfg.window + 1) - max(0, i - cfg.window) - 1 for i in range(n)) for n in lengths]
    )
    pairs_per_epoch = int(pairs_per_walk.sum())
    if pairs_per_epoch == 0:
        raise ValueError("walks are too short to form any (center, context) pair")
    total_steps = pairs_per_epoch * cfg.epochs

    losses = []
    step = 0
    for epoch in range(cfg.epochs):
        epoch_loss = 0.0
        # walks arrive grouped by start node; visit them in a fresh order each epoch
        order = rng.permutation(len(walks))
        for centers, contexts in _epoch_pairs(flat, offsets, order, cfg.window):
            # pairs from one walk are strongly correlated; mixing them keeps the
            # updates (and the running loss) close to i.i.d. SGD
            perm = rng.permutation(len(centers))
            centers, contexts = centers[perm], contexts[perm]
            u = rng.random((len(centers), cfg.negatives)) * noise_cum[-1]
            negs = np.searchsorted(noise_cum, u, side="right").astype(np.int64)
            np.minimum(negs, n_vocab - 1, out=negs)
            epoch_loss += _sgns_update(
                w_in, w_out, centers, contexts, negs,
                cfg.learning_rate, cfg.min_learning_rate, step, total_steps,
            )
            step += len(centers)
        mean = epoch_loss / pairs_per_epoch
        if not math.isfinite(mean) or not np.all(np.isfinite(w_in)):
            raise TrainingDivergedError(
                f"skip-gram loss became non-finite in epoch {epoch + 1} "
                f"(learning_rate={cfg.learning_rate}); lower the learning rate"
            )
        logger.info("skip-gram epoch %d/%d loss %.6f", epoch + 1, cfg.epochs, mean)
        losses.append(mean)

    labels = list(vocab)
    return EmbeddingTable(labels, w_in), losses
