import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from kgfusion.kg import KnowledgeGraph
from kgfusion.walks import TABLE_DEGREE, WalkConfig, WalkSampler, generate_walks, transition_weights


def graph(*edges):
    return KnowledgeGraph.from_triples([(a, "r", b) for a, b in edges])


def ids(g, *labels):
    return [g.label_index[x] for x in labels]


def hand_bias(prev, x, adjacent_to_prev, p, q):
    """Distance-based bias written out case by case."""
    if x == prev:
        return 1 / p
    if adjacent_to_prev:
        return 1.0
    return 1 / q


def test_uniform_when_p_q_one():
    g = graph(("a", "b"), ("b", "c"), ("b", "d"), ("c", "d"))
    cfg = WalkConfig(return_param_p=1, inout_param_q=1)
    a, b = ids(g, "a", "b")
    assert all(w == 1.0 for _, w in transition_weights(a, b, g, cfg))
    assert all(w == 1.0 for _, w in transition_weights(None, b, g, cfg))


def test_path_graph_bias():
    g = graph(("a", "b"), ("b", "c"))
    a, b, c = ids(g, "a", "b", "c")
    cfg = WalkConfig(return_param_p=2, inout_param_q=0.5)
    got = dict(transition_weights(a, b, g, cfg))
    expected = {x: hand_bias(a, x, g.has_edge(x, a), 2, 0.5) for x in (a, c)}
    assert expected == {a: 0.5, c: 2.0}
    assert got == pytest.approx(expected, abs=0)


def test_triangle_bias():
    g = graph(("a", "b"), ("b", "c"), ("a", "c"))
    a, b, c = ids(g, "a", "b", "c")
    cfg = WalkConfig(return_param_p=4, inout_param_q=3)
    assert dict(transition_weights(a, b, g, cfg)) == {a: 0.25, c: 1.0}


def test_isolated_node_errors():
    g = KnowledgeGraph.from_triples([("a", "r", "b"), ("c", "r", "c")])
    with pytest.raises(ValueError, match="no neighbors"):
        transition_weights(None, g.label_index["c"], g, WalkConfig())


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.tuples(st.integers(0, 7), st.integers(0, 7)), min_size=1, max_size=20),
    st.floats(0.1, 10), st.floats(0.1, 10),
)
def test_weights_positive_and_normalize(edges, p, q):
    g = KnowledgeGraph.from_triples([(str(u), "r", str(v)) for u, v in edges])
    cfg = WalkConfig(return_param_p=p, inout_param_q=q)
    for curr in g.non_isolated():
        for prev in (None,) + g.neighbors(curr):
            pairs = transition_weights(prev, curr, g, cfg)
            w = np.array([x for _, x in pairs])
            assert np.all(w > 0)
            assert abs((w / w.sum()).sum() - 1.0) < 1e-12
            for x, weight in pairs:
                if prev is not None:
                    assert weight == hand_bias(prev, x, g.has_edge(x, prev), p, q)


def test_single_edge_walk():
    g = graph(("a", "b"))
    a, b = ids(g, "a", "b")
    walks = generate_walks(g, WalkConfig(walks_per_node=1, walk_length=3))
    assert walks[0] == [a, b, a]
    assert walks[1] == [b, a, b]


def test_walk_count_and_starts(toy_graph):
    cfg = WalkConfig(walks_per_node=3, walk_length=7, seed=5)
    walks = generate_walks(toy_graph, cfg)
    starts = toy_graph.non_isolated()
    assert len(walks) == 3 * len(starts)
    assert [w[0] for w in walks] == [s for s in starts for _ in range(3)]
    for w in walks:
        assert len(w) == 7
        for u, v in zip(w, w[1:]):
            assert toy_graph.has_edge(u, v)


def test_walks_deterministic(toy_graph):
    cfg = WalkConfig(seed=99)
    assert generate_walks(toy_graph, cfg) == generate_walks(toy_graph, cfg)
    assert generate_walks(toy_graph, cfg) != generate_walks(toy_graph, WalkConfig(seed=100))


def test_subset_of_start_nodes_matches_full_run(toy_graph):
    cfg = WalkConfig(walks_per_node=2, seed=3)
    full = generate_walks(toy_graph, cfg)
    part = generate_walks(toy_graph, cfg, start_nodes=[4, 2])
    assert part == full[4:6] + full[8:10]


def test_star_leaf_frequencies():
    g = graph(*[("c", f"leaf{i}") for i in range(4)])
    c = g.label_index["c"]
    sampler = WalkSampler(g, WalkConfig())
    rng = np.random.default_rng(0)
    counts = np.zeros(len(g))
    for _ in range(10_000):
        counts[sampler.step(None, c, rng)] += 1
    freqs = counts[[g.label_index[f"leaf{i}"] for i in range(4)]] / 10_000
    assert np.all(np.abs(freqs - 0.25) <= 0.02)
    assert chisquare(counts[counts > 0]).pvalue > 0.001


def test_cached_tables_match_linear_scan():
    leaves = [("hub", f"n{i}") for i in range(TABLE_DEGREE + 6)]
    g = graph(*leaves, ("n0", "n1"))
    hub, n0 = ids(g, "hub", "n0")
    cfg = WalkConfig(return_param_p=0.5, inout_param_q=2.0)
    cached = WalkSampler(g, cfg)
    seq_cached = [cached.step(n0, hub, np.random.default_rng(s)) for s in range(200)]
    assert (n0, hub) in cached._tables
    # an independent draw from the normalized distribution with the same uniforms
    pairs = transition_weights(n0, hub, g, cfg)
    w = np.array([x for _, x in pairs])
    cum = np.cumsum(w)
    manual = [pairs[int(np.searchsorted(cum, np.random.default_rng(s).random() * cum[-1], side="right"))][0]
              for s in range(200)]
    assert seq_cached == manual
