"""Knowledge graph loading and exact-match entity linking."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .text import normalize_label

logger = logging.getLogger(__name__)


class KGParseError(ValueError):
    """Raised for malformed triple files."""


@dataclass(frozen=True)
class Concept:
    id: int
    label: str


@dataclass(frozen=True)
class Edge:
    head: int
    tail: int
    relation: str


@dataclass(frozen=True)
class KnowledgeGraph:
    """Concepts plus an undirected, sorted, duplicate-free adjacency view.

    Relation labels are kept on ``edges`` for provenance only; walks use
    ``adjacency``.
    """

    concepts: tuple[Concept, ...]
    edges: tuple[Edge, ...]
    adjacency: tuple[tuple[int, ...], ...]
    label_index: dict[str, int]
    n_self_loops: int = 0
    n_duplicates: int = 0
    _neighbor_sets: tuple[frozenset, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if not self._neighbor_sets:
            object.__setattr__(
                self, "_neighbor_sets", tuple(frozenset(nbrs) for nbrs in self.adjacency)
            )

    @classmethod
    def from_triples(cls, triples) -> "KnowledgeGraph":
        """Build a graph from ``(head, relation, tail)`` string triples."""
        label_index: dict[str, int] = {}
        concepts: list[Concept] = []

        def intern(label):
            cid = label_index.get(label)
            if cid is None:
                cid = len(concepts)
                label_index[label] = cid
                concepts.append(Concept(cid, label))
            return cid

        seen = set()
        edges = []
        n_self_loops = n_duplicates = 0
        for head, relation, tail in triples:
            h = intern(normalize_label(head))
            t = intern(normalize_label(tail))
            rel = relation.strip()
            if h == t:
                n_self_loops += 1
                continue
            key = (h, rel, t)
            if key in seen:
                n_duplicates += 1
                continue
            seen.add(key)
            edges.append(Edge(h, t, rel))

        if not concepts:
            raise KGParseError("knowledge graph is empty")

        nbrs: list[set[int]] = [set() for _ in concepts]
        for e in edges:
            nbrs[e.head].add(e.tail)
            nbrs[e.tail].add(e.head)
        adjacency = tuple(tuple(sorted(s)) for s in nbrs)
        if n_self_loops:
            logger.warning("dropped %d self-loop triple(s)", n_self_loops)
        return cls(
            concepts=tuple(concepts),
            edges=tuple(edges),
            adjacency=adjacency,
            label_index=label_index,
            n_self_loops=n_self_loops,
            n_duplicates=n_duplicates,
        )

    def __len__(self):
        return len(self.concepts)

    def neighbors(self, node: int) -> tuple[int, ...]:
        return self.adjacency[node]

    def has_edge(self, u: int, v: int) -> bool:
        return v in self._neighbor_sets[u]

    def degree(self, node: int) -> int:
        return len(self.adjacency[node])

    def label(self, node: int) -> str:
        return self.concepts[node].label

    def non_isolated(self) -> list[int]:
        return [c.id for c in self.concepts if self.adjacency[c.id]]


def read_triples(path):
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise KGParseError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(fields)}"
                )
            head, relation, tail = fields
            if not normalize_label(head) or not normalize_label(tail):
                raise KGParseError(f"{path}:{lineno}: empty concept label")
            yield head, relation, tail


def load_kg(path) -> KnowledgeGraph:
    """Load a tab-separated ``head<TAB>relation<TAB>tail`` file."""
    return KnowledgeGraph.from_triples(read_triples(path))


def link_term(term: str, graph: KnowledgeGraph) -> Optional[int]:
    """Return the concept id whose normalized label equals the normalized term."""
    return graph.label_index.get(normalize_label(term))
