"""Shared construction helpers for randomized tests.

Generators take an explicit numpy Generator so each test controls its
own seeding; nothing here is a fixture with hidden state.
"""

import numpy as np
import pytest

from gtc.alphabet import Alphabet
from gtc.graph import Edge, GtcGraph, walk_count
from gtc.wfst import Wfst

ABC = Alphabet.from_tokens(["a", "b", "c"])


def random_posteriors(rng: np.random.Generator, T: int, width: int) -> np.ndarray:
    """Dirichlet rows: strictly positive, sum to 1."""
    return rng.dirichlet(np.ones(width), size=T)


def random_logits(rng: np.random.Generator, T: int, width: int,
                  scale: float = 1.5) -> np.ndarray:
    return rng.normal(0.0, scale, (T, width))


def random_graph(rng: np.random.Generator, alphabet: Alphabet = ABC,
                 max_emitting: int = 10, self_loop_p: float = 0.6,
                 extra_edge_p: float = 0.3, unit: bool = False) -> GtcGraph:
    """Random valid supervision graph.

    A start-to-end spine guarantees every node lies on a complete path;
    extra forward edges and self-loops diversify the topology.
    """
    G = int(rng.integers(1, max_emitting + 1))
    labels = (-1,) + tuple(int(rng.integers(0, len(alphabet)))
                           for _ in range(G)) + (-2,)

    def weight() -> float:
        return 1.0 if unit else float(rng.uniform(0.1, 1.0))

    edges = {}
    for g in range(G + 1):
        edges[(g, g + 1)] = weight()
    for src in range(G + 1):
        for dst in range(src + 1, G + 2):
            if (src, dst) in edges or (src == 0 and dst == G + 1):
                continue
            if rng.random() < extra_edge_p:
                edges[(src, dst)] = weight()
    for g in range(1, G + 1):
        if rng.random() < self_loop_p:
            edges[(g, g)] = weight()
    return GtcGraph(alphabet, labels,
                    tuple(Edge(s, d, w) for (s, d), w in edges.items()))


def small_graph_and_T(rng: np.random.Generator, alphabet: Alphabet = ABC,
                      max_emitting: int = 10, max_T: int = 12,
                      max_walks: int = 4000) -> tuple[GtcGraph, int]:
    """Graph/frame-count pair whose unfolding stays enumerable."""
    while True:
        graph = random_graph(rng, alphabet, max_emitting=max_emitting)
        T = int(rng.integers(1, max_T + 1))
        n = walk_count(graph, T)
        if 1 <= n <= max_walks:
            return graph, T


def random_acyclic_fst(rng: np.random.Generator, max_states: int = 8,
                       symbols: tuple[str, ...] = ("a", "b"),
                       eps_p: float = 0.2, arc_factor: float = 2.0,
                       max_cost: float = 3.0) -> Wfst:
    """Random acyclic acceptor with at least one accepting path.

    Arcs only go from lower to higher state ids, so the machine is
    acyclic by construction; a final spine state keeps the language
    nonempty. About ``eps_p`` of arcs carry the empty label.
    """
    n = int(rng.integers(2, max_states + 1))
    fst = Wfst()
    fst.add_states(n)
    fst.set_start(0)
    fst.set_final(n - 1, float(rng.uniform(0.0, max_cost)))
    if rng.random() < 0.3:
        extra = int(rng.integers(1, n))
        fst.set_final(extra, float(rng.uniform(0.0, max_cost)))

    def label() -> str:
        if rng.random() < eps_p:
            return "<eps>"
        return str(rng.choice(symbols))

    # spine keeps every state reachable and co-reachable
    for s in range(n - 1):
        fst.add_arc(s, s + 1, label(), float(rng.uniform(0.0, max_cost)))
    for _ in range(int(arc_factor * n)):
        src = int(rng.integers(0, n - 1))
        dst = int(rng.integers(src + 1, n))
        fst.add_arc(src, dst, label(), float(rng.uniform(0.0, max_cost)))
    return fst


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
