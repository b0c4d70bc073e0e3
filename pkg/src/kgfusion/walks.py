"""Second-order biased random walks over a :class:`KnowledgeGraph`."""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from itertools import accumulate

import numpy as np

from .kg import KnowledgeGraph

# Nodes at or above this degree get cached cumulative weight tables per (prev, curr).
TABLE_DEGREE = 64


@dataclass(frozen=True)
class WalkConfig:
    walks_per_node: int = 10
    walk_length: int = 40
    return_param_p: float = 1.0
    inout_param_q: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.walks_per_node < 1:
            raise ValueError("walks_per_node must be positive")
        if self.walk_length < 2:
            raise ValueError("walk_length must be at least 2")
        if not (self.return_param_p > 0 and self.inout_param_q > 0):
            raise ValueError("p and q must be strictly positive")


def transition_weights(prev, curr, graph: KnowledgeGraph, cfg: WalkConfig):
    """Unnormalized next-step weights from ``curr`` given the previous node.

    ``prev`` is ``None`` at the start of a walk, where every neighbor weighs 1.
    Otherwise a neighbor weighs ``1/p`` if it is ``prev``, ``1`` if it is also
    adjacent to ``prev`` and ``1/q`` otherwise.
    """
    nbrs = graph.neighbors(curr)
    if not nbrs:
        raise ValueError(f"node {curr} has no neighbors")
    if prev is None:
        return [(x, 1.0) for x in nbrs]
    inv_p = 1.0 / cfg.return_param_p
    inv_q = 1.0 / cfg.inout_param_q
    out = []
    for x in nbrs:
        if x == prev:
            w = inv_p
        elif graph.has_edge(x, prev):
            w = 1.0
        else:
            w = inv_q
        out.append((x, w))
    return out


class WalkSampler:
    """Draws next steps; caches cumulative tables for high-degree nodes."""

    def __init__(self, graph: KnowledgeGraph, cfg: WalkConfig):
        self.graph = graph
        self.cfg = cfg
        self._tables: dict[tuple, tuple[list[int], list[float]]] = {}

    def _cumulative(self, prev, curr):
        key = (prev, curr)
        hit = self._tables.get(key)
        if hit is not None:
            return hit
        pairs = transition_weights(prev, curr, self.graph, self.cfg)
        nodes = [x for x, _ in pairs]
        cum = list(accumulate(w for _, w in pairs))
        if self.graph.degree(curr) >= TABLE_DEGREE:
            self._tables[key] = (nodes, cum)
        return nodes, cum

    def step(self, prev, curr, rng: np.random.Generator) -> int:
        nodes, cum = self._cumulative(prev, curr)
        u = rng.random() * cum[-1]
        idx = bisect_right(cum, u)
        return nodes[min(idx, len(nodes) - 1)]

    def walk(self, start: int, rng: np.random.Generator) -> list[int]:
        walk = [start]
        prev = None
        while len(walk) < self.cfg.walk_length:
            curr = walk[-1]
            if not self.graph.adjacency[curr]:
                break
            nxt = self.step(prev, curr, rng)
            prev = curr
            walk.append(nxt)
        return walk


def node_rng(seed: int, node: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, node]))


def generate_walks(graph: KnowledgeGraph, cfg: WalkConfig, start_nodes=None) -> list[list[int]]:
    """Walks ordered by start node, then walk index.

    Each start node draws from its own generator seeded by ``(seed, node)``,
    so any subset of start nodes can be produced independently.
    """
    if len(graph) == 0:
        raise ValueError("graph is empty")
    sampler = WalkSampler(graph, cfg)
    starts = graph.non_isolated() if start_nodes is None else sorted(start_nodes)
    walks = []
    for node in starts:
        rng = node_rng(cfg.seed, node)
        for _ in range(cfg.walks_per_node):
            walks.append(sampler.walk(node, rng))
    return walks
