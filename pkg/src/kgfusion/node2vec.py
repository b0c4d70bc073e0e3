"""Node2Vec-style concept embeddings as an estimator."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .kg import KnowledgeGraph
from .skipgram import TrainConfig, train_skipgram
from .walks import WalkConfig, generate_walks


class Node2VecEmbedder(BaseEstimator, TransformerMixin):
    """Biased random walks plus skip-gram with negative sampling.

    ``fit`` takes a :class:`KnowledgeGraph`; ``transform`` maps concept labels
    to rows of ``embeddings_``. Walks and training draw from independent seeds
    so either can be changed without disturbing the other.

    Attributes
    ----------
    embeddings_ : EmbeddingTable
        One vector per non-isolated concept, keyed by normalized label.
    loss_trace_ : list of float
        Mean per-pair loss for each epoch.
    walks_ : list of list of int
    """

    def __init__(self, dim=128, walks_per_node=10, walk_length=40, p=1.0, q=1.0, window=5,
                 negatives=5, learning_rate=0.025, min_learning_rate=1e-4, epochs=5,
                 walk_seed=0, train_seed=0):
        self.dim = dim
        self.walks_per_node = walks_per_node
        self.walk_length = walk_length
        self.p = p
        self.q = q
        self.window = window
        self.negatives = negatives
        self.learning_rate = learning_rate
        self.min_learning_rate = min_learning_rate
        self.epochs = epochs
        self.walk_seed = walk_seed
        self.train_seed = train_seed

    def walk_config(self) -> WalkConfig:
        return WalkConfig(self.walks_per_node, self.walk_length, self.p, self.q, self.walk_seed)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            dim=self.dim, window=self.window, negatives=self.negatives,
            learning_rate=self.learning_rate, min_learning_rate=self.min_learning_rate,
            epochs=self.epochs, seed=self.train_seed,
        )

    def fit(self, X: KnowledgeGraph, y=None):
        graph = X
        self.walks_ = generate_walks(graph, self.walk_config())
        labelled = [[graph.label(n) for n in walk] for walk in self.walks_]
        self.embeddings_, self.loss_trace_ = train_skipgram(labelled, self.train_config())
        return self

    def transform(self, X):
        check_is_fitted(self, "embeddings_")
        return np.vstack([self.embeddings_[label] for label in X])
