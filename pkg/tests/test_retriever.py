import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kgfusion.bm25 import read_corpus
from kgfusion.embeddings import EmbeddingTable
from kgfusion.kg import KnowledgeGraph
from kgfusion.node2vec import Node2VecEmbedder
from kgfusion.retriever import (
    DocKeywordEmbeddings,
    EmptyQueryError,
    FusionRanker,
    KeywordMatrix,
    QueryEmbedding,
    ScoredDoc,
    TermEmbedder,
    embed_query,
    fuse,
    maxsim_score,
    minmax,
)


def q(*vecs):
    return QueryEmbedding("q", [f"t{i}" for i in range(len(vecs))], np.array(vecs, float))


def d(*vecs, dim=2):
    arr = np.array(vecs, float) if vecs else np.zeros((0, dim))
    return DocKeywordEmbeddings("d", [f"k{i}" for i in range(len(vecs))], arr)


def test_maxsim_self():
    v = [3.0, -4.0]
    assert maxsim_score(q(v), d(v)) == 25.0


def test_maxsim_picks_max():
    assert maxsim_score(q([1, 0]), d([0, 1], [0.5, 0])) == 0.5


def test_maxsim_edge_cases():
    assert maxsim_score(q([1, 0]), d()) == 0.0
    with pytest.raises(ValueError, match="dimension"):
        maxsim_score(q([1, 0]), d([1, 0, 0]))


def triple_loop(qv, dv):
    total = 0.0
    for i in range(len(qv)):
        best = -np.inf
        for j in range(len(dv)):
            s = 0.0
            for k in range(len(qv[i])):
                s += qv[i][k] * dv[j][k]
            best = max(best, s)
        total += best
    return total


@settings(max_examples=1000, deadline=None)
@given(st.integers(1, 5), st.integers(1, 10), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_maxsim_oracle_and_monotone(nq, nd, dim, seed):
    rng = np.random.default_rng(seed)
    qv, dv = rng.normal(size=(nq, dim)), rng.normal(size=(nd, dim))
    s = maxsim_score(q(*qv), d(*dv))
    assert abs(s - triple_loop(qv, dv)) <= 1e-12 * max(1.0, abs(s))
    extra = np.vstack([dv, rng.normal(size=(1, dim))])
    assert maxsim_score(q(*qv), d(*extra)) >= s
    # the batched per-document path agrees with the single-document one
    mat = KeywordMatrix.from_docs([d(*dv), d(*extra)], dim)
    np.testing.assert_allclose(mat.scores(qv), [s, maxsim_score(q(*qv), d(*extra))], rtol=0, atol=1e-12)


def test_fuse_branches():
    out = {sd.doc_id: sd for sd in fuse({"both": 0.4, "kg": 0.4}, {"both": 1.1, "lex": 1.1})}
    assert out["both"] == ScoredDoc("both", 0.4, 1.1, 0.4 + 1.1)
    assert out["kg"] == ScoredDoc("kg", 0.4, None, 0.4)
    assert out["lex"] == ScoredDoc("lex", 0.0, 1.1, 1.1)
    assert out["both"].fused == pytest.approx(1.5)


@settings(max_examples=300)
@given(
    st.dictionaries(st.sampled_from("abcdef"), st.floats(-5, 5)),
    st.dictionaries(st.sampled_from("abcdef"), st.floats(0, 5)),
)
def test_fusion_dominance_and_order(kg, lex):
    ranked = fuse(kg, lex)
    assert {sd.doc_id for sd in ranked} == set(kg) | set(lex)
    for sd in ranked:
        assert sd.fused >= sd.kg_score
        if sd.bm25_score is None:
            assert sd.fused == sd.kg_score
    keys = [(-sd.fused, sd.doc_id) for sd in ranked]
    assert keys == sorted(keys)


def test_minmax():
    assert minmax({"a": 2.0, "b": 4.0}) == {"a": 0.0, "b": 1.0}
    assert minmax({"a": 3.0, "b": 3.0}) == {"a": 1.0, "b": 1.0}
    assert minmax({}) == {}


@pytest.fixture
def small_kg():
    graph = KnowledgeGraph.from_triples([
        ("zoloft", "brand_of", "sertraline"),
        ("sertraline", "treats", "depression"),
        ("stroke", "risk_factor", "hypertension"),
        ("cancer", "treated_by", "chemotherapy"),
    ])
    table = EmbeddingTable(
        ["zoloft", "sertraline", "depression", "stroke", "hypertension", "cancer", "chemotherapy"],
        [[1.0, 0.0, 0.1], [0.9, 0.1, 0.0], [0.7, 0.2, 0.1], [0.0, 1.0, 0.0],
         [0.1, 0.9, 0.0], [0.0, 0.0, 1.0], [0.1, 0.0, 0.9]],
    )
    return graph, table


def test_embed_query_paths(small_kg):
    graph, table = small_kg
    emb = TermEmbedder(graph, table, "prefix")
    qe = embed_query("Cancer", emb)
    np.testing.assert_array_equal(qe.vectors[0], table["cancer"])
    # a term missing from the graph and table goes through the OOV strategy
    sub = EmbeddingTable(table.labels[1:], table.vectors[1:])
    qe = embed_query("zoloft", TermEmbedder(graph, sub, "prefix"))
    np.testing.assert_allclose(qe.vectors[0], sub.vectors.mean(axis=0))
    with pytest.raises(EmptyQueryError, match="empty query"):
        embed_query("the", emb)
    with pytest.raises(EmptyQueryError):
        embed_query("unknownword", TermEmbedder(graph, table, None))


def test_embedder_validation(small_kg):
    graph, table = small_kg
    with pytest.raises(ValueError, match="unknown OOV"):
        TermEmbedder(graph, table, "nearest")
    with pytest.raises(ValueError, match="trained model"):
        TermEmbedder(graph, table, "charlstm")


CORPUS = [("d1", "sertraline dose for depression"), ("d2", "stroke and hypertension"),
          ("d3", "chemotherapy for cancer"), ("d4", "notes without concepts")]


def test_zero_overlap_relevant_doc_ranks_first(small_kg):
    graph, table = small_kg
    ranker = FusionRanker(oov_strategy=None).fit(CORPUS, graph=graph, table=table)
    ranked = ranker.search("zoloft")
    assert ranked[0].doc_id == "d1"
    assert ranked[0].bm25_score is None
    assert ranker.bm25_candidates("zoloft") == {}
    assert ranker.unembedded_docs_ == ["d4"]
    assert ranker.explain("zoloft", "d1")[0][:2] == ("zoloft", "sertraline")


def test_query_equal_to_keywords_maximizes_kg_score(data_dir, toy_graph):
    # holds for unit vectors; raw dot products let a doc with longer vectors win
    table = Node2VecEmbedder(dim=16, walks_per_node=4, epochs=2).fit(toy_graph).embeddings_
    corpus = list(read_corpus(data_dir / "toy_corpus.jsonl"))
    ranker = FusionRanker(l2_normalize=True).fit(corpus, graph=toy_graph, table=table)
    for doc_id, kws in ranker.keyword_sets_.items():
        kg = ranker.kg_scores(ranker.embed_query(" ".join(kws.tokens)))
        assert kg[doc_id] >= max(kg.values()) - 1e-9


def test_deterministic_and_order_invariant(small_kg):
    graph, table = small_kg
    a = FusionRanker().fit(CORPUS, graph=graph, table=table)
    b = FusionRanker().fit(CORPUS[::-1], graph=graph, table=table)
    for query in ("zoloft", "stroke cancer", "depression notes"):
        assert a.search(query) == a.search(query) == b.search(query)


def test_options(small_kg):
    graph, table = small_kg
    kg_only = FusionRanker(use_bm25=False).fit(CORPUS, graph=graph, table=table)
    assert all(sd.bm25_score is None for sd in kg_only.search("stroke"))
    norm = FusionRanker(normalize_scores=True, l2_normalize=True).fit(CORPUS, graph=graph, table=table)
    ranked = norm.search("stroke")
    assert ranked[0].doc_id == "d2"
    assert all(0.0 <= sd.kg_score <= 1.0 for sd in ranked)
    assert len(FusionRanker(run_depth=2).fit(CORPUS, graph=graph, table=table).search("stroke")) == 2
    with pytest.raises(ValueError):
        FusionRanker(n_keywords=0).fit(CORPUS, graph=graph, table=table)


def test_save_load_equivalent(tmp_path, small_kg):
    graph, table = small_kg
    ranker = FusionRanker(n_keywords=2).fit(CORPUS, graph=graph, table=table)
    ranker.save(tmp_path / "idx")
    back = FusionRanker.load(tmp_path / "idx", graph=graph, table=table)
    assert back.get_params() == ranker.get_params()
    assert back.unembedded_docs_ == ranker.unembedded_docs_
    pairs = [("a", "zoloft"), ("b", "stroke cancer")]
    assert back.predict(pairs) == ranker.predict(pairs)
    assert FusionRanker.load(tmp_path / "idx", graph=graph, table=table, run_depth=1).run_depth == 1
