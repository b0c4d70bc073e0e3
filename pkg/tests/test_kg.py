import pytest
from hypothesis import given, strategies as st

from kgfusion.kg import KGParseError, KnowledgeGraph, link_term, load_kg
from kgfusion.text import normalize_label, tokenize

from conftest import write


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("  Cancer ", "cancer"),
        ("High   Blood Pressure", "high blood pressure"),
        ("chemotherapy.", "chemotherapy"),
        ("\t(Depression)\n", "depression"),
        ("", ""),
    ],
)
def test_normalize_label(raw, expected):
    assert normalize_label(raw) == expected


@given(st.text())
def test_normalize_label_is_idempotent(raw):
    once = normalize_label(raw)
    assert normalize_label(once) == once


@pytest.mark.parametrize(
    "text, expected",
    [
        ("High-Blood Pressure!", ["high", "blood", "pressure"]),
        ("", []),
        ("zoloft 50mg", ["zoloft", "50mg"]),
        ("snake_case  x", ["snake", "case", "x"]),
    ],
)
def test_tokenize(text, expected):
    assert tokenize(text) == expected


def test_single_triple(tmp_path):
    g = load_kg(write(tmp_path / "kg.tsv", "cancer\ttreatment\tchemotherapy\n"))
    assert len(g) == 2
    assert len(g.edges) == 1
    assert g.edges[0].relation == "treatment"
    assert g.neighbors(g.label_index["cancer"]) == (g.label_index["chemotherapy"],)


def test_duplicates_and_self_loops_dropped(tmp_path):
    text = "# comment\na\tr\tb\nA\tr\tb.\nc\tr\tc\n\n"
    g = load_kg(write(tmp_path / "kg.tsv", text))
    assert len(g.edges) == 1
    assert g.n_duplicates == 1
    assert g.n_self_loops == 1
    # the self-loop concept still exists, isolated
    assert g.degree(g.label_index["c"]) == 0
    assert g.non_isolated() == [g.label_index["a"], g.label_index["b"]]


def test_bad_arity_names_line(tmp_path):
    path = write(tmp_path / "kg.tsv", "a\tb\n")
    with pytest.raises(KGParseError, match=":1:"):
        load_kg(path)
    path = write(tmp_path / "kg2.tsv", "# header\nx\tr\ty\na\tb\tc\td\n")
    with pytest.raises(KGParseError, match=":3:"):
        load_kg(path)


def test_empty_graph_rejected(tmp_path):
    with pytest.raises(KGParseError):
        load_kg(write(tmp_path / "kg.tsv", "# nothing here\n"))


def test_link_term(tmp_path):
    g = load_kg(write(tmp_path / "kg.tsv", "cancer\ttreatment\tchemotherapy\n"))
    assert link_term("Cancer", g) == g.label_index["cancer"]
    assert link_term("oncology", g) is None
    assert link_term("chemotherapy.", g) == g.label_index["chemotherapy"]
    # no partial matching of single tokens against other labels
    assert link_term("chemo", g) is None


def test_multiword_labels_link_whole(toy_graph):
    assert link_term("High Blood Pressure", toy_graph) is not None
    assert link_term("blood", toy_graph) is None


def test_adjacency_symmetric_sorted(toy_graph):
    for u, nbrs in enumerate(toy_graph.adjacency):
        assert list(nbrs) == sorted(set(nbrs))
        for v in nbrs:
            assert u in toy_graph.adjacency[v]


def test_load_is_idempotent(data_dir):
    assert load_kg(data_dir / "toy_kg.tsv") == load_kg(data_dir / "toy_kg.tsv")


def test_toy_fixture_size(toy_graph):
    assert len(toy_graph) == 30
    assert len(toy_graph.non_isolated()) == 30


labels = st.sampled_from(["alpha", "beta", "gamma", "delta", "Alpha.", " beta "])


@given(st.lists(st.tuples(labels, st.sampled_from(["r", "s"]), labels), min_size=1), st.text(max_size=8))
def test_link_iff_label_present(triples, term):
    g = KnowledgeGraph.from_triples(triples)
    assert (link_term(term, g) is not None) == (normalize_label(term) in g.label_index)
    for u, nbrs in enumerate(g.adjacency):
        for v in nbrs:
            assert g.has_edge(v, u)
            assert u != v
