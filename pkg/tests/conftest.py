import sys
from pathlib import Path

import numpy as np
import pytest

from kgfusion.kg import KnowledgeGraph, load_kg

DATA = Path(__file__).resolve().parents[1] / "src" / "kgfusion" / "data"


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def toy_graph():
    return load_kg(DATA / "toy_kg.tsv")


def clique_pair(bridge=True):
    triples = []
    for base in ("a", "b"):
        names = [f"{base}{i}" for i in range(4)]
        for i in range(4):
            for j in range(i + 1, 4):
                triples.append((names[i], "r", names[j]))
    if bridge:
        triples.append(("a0", "bridge", "b0"))
    return KnowledgeGraph.from_triples(triples)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
