import numpy as np
import pytest

from kgfusion.node2vec import Node2VecEmbedder
from kgfusion.skipgram import (
    TrainConfig,
    TrainingDivergedError,
    pair_gradients,
    pair_objective,
    sgns_step,
    skipgram_pairs,
    train_skipgram,
)
from kgfusion.walks import WalkConfig, generate_walks

from conftest import clique_pair


def central_diff(f, x, h=1e-6):
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = f()
        x[idx] = old - h
        down = f()
        x[idx] = old
        grad[idx] = (up - down) / (2 * h)
    return grad


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b))


def test_window_one_pairs():
    walk = ["a", "b"] * 5
    pairs = list(skipgram_pairs(walk, 1))
    assert set(pairs) == {("a", "b"), ("b", "a")}
    assert len(pairs) == 2 * (len(walk) - 1)


def test_window_pairs_enumeration():
    pairs = list(skipgram_pairs([1, 2, 3, 4], 2))
    assert pairs == [(1, 2), (1, 3), (2, 1), (2, 3), (2, 4), (3, 1), (3, 2), (3, 4), (4, 2), (4, 3)]


@pytest.mark.parametrize("seed", range(3))
def test_pair_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    v, u, negs = rng.normal(size=3), rng.normal(size=3), rng.normal(size=(4, 3))
    dv, du, dn = pair_gradients(v, u, negs)
    f = lambda: pair_objective(v, u, negs)  # noqa: E731
    assert rel_err(dv, central_diff(f, v)) < 1e-5
    assert rel_err(du, central_diff(f, u)) < 1e-5
    assert rel_err(dn, central_diff(f, negs)) < 1e-5


def test_compiled_update_is_one_gradient_step(rng):
    w_in, w_out = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    before_in, before_out = w_in.copy(), w_out.copy()
    lr = 0.05
    loss = sgns_step(w_in, w_out, 0, 1, [2, 3, 4], lr)
    dv, du, dn = pair_gradients(before_in[0], before_out[1], before_out[[2, 3, 4]])
    np.testing.assert_allclose(w_in[0], before_in[0] + lr * dv, atol=1e-14)
    np.testing.assert_allclose(w_out[1], before_out[1] + lr * du, atol=1e-14)
    np.testing.assert_allclose(w_out[[2, 3, 4]], before_out[[2, 3, 4]] + lr * dn, atol=1e-14)
    assert loss == pytest.approx(-pair_objective(before_in[0], before_out[1], before_out[[2, 3, 4]]))


def test_table_covers_walk_tokens():
    walks = [["x", "y", "z"], ["z", "w"]]
    table, losses = train_skipgram(walks, TrainConfig(dim=4, epochs=2, window=1))
    assert table.labels == ["x", "y", "z", "w"]
    assert table.dim == 4
    assert len(losses) == 2


def test_bitwise_reproducible(toy_graph):
    walks = generate_walks(toy_graph, WalkConfig(walks_per_node=2, seed=1))
    cfg = TrainConfig(dim=8, epochs=2, seed=7)
    t1, l1 = train_skipgram(walks, cfg)
    t2, l2 = train_skipgram(walks, cfg)
    assert np.array_equal(t1.vectors, t2.vectors)
    assert l1 == l2


def test_divergence_detected():
    walks = [["a", "b", "c", "a", "b"]] * 50
    with pytest.raises(TrainingDivergedError, match="learning rate"):
        train_skipgram(walks, TrainConfig(dim=4, learning_rate=1e308, epochs=1))


def test_empty_walks_rejected():
    with pytest.raises(ValueError):
        train_skipgram([], TrainConfig())


def test_loss_descent_on_toy_walks(toy_graph):
    walks = generate_walks(toy_graph, WalkConfig(seed=0))
    _, losses = train_skipgram(walks, TrainConfig(learning_rate=0.025, epochs=3, seed=0))
    rises = [b > a for a, b in zip(losses, losses[1:])]
    assert sum(rises) <= 1
    assert all(b <= a * 1.01 for a, b in zip(losses, losses[1:]))


def community_gap(table):
    v = table.vectors / np.linalg.norm(table.vectors, axis=1, keepdims=True)
    sims = v @ v.T
    intra, inter = [], []
    for i, x in enumerate(table.labels):
        for j, y in enumerate(table.labels):
            if i < j:
                (intra if x[0] == y[0] else inter).append(sims[i, j])
    return np.mean(intra), np.mean(inter)


def test_disjoint_cliques_separate():
    emb = Node2VecEmbedder(dim=16, epochs=5, walk_seed=0, train_seed=0).fit(clique_pair(bridge=False))
    intra, inter = community_gap(emb.embeddings_)
    assert intra > inter


def test_estimator_api(toy_graph):
    emb = Node2VecEmbedder(dim=8, walks_per_node=2, epochs=1)
    assert emb.get_params()["dim"] == 8
    emb.set_params(dim=6)
    emb.fit(toy_graph)
    X = emb.transform(["cancer", "zoloft"])
    assert X.shape == (2, 6)
    np.testing.assert_array_equal(X[0], emb.embeddings_["cancer"])
