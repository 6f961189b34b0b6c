"""Supervision graphs: node-labeled weighted DAGs with CTC-style self-loops.

A graph has non-emitting start (node 0) and end (node G+1) terminals around
G emitting nodes, each labeled with an alphabet symbol (blank included).
Edges carry transition probabilities; self-loops model symbol repetition
across frames. Training marginalizes over every length-T walk from start
to end, so the graph is simultaneously a set of label sequences and a set
of frame alignments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

from .alphabet import BLANK, EPSILON, Alphabet
from .errors import BudgetExceededError, NondeterministicError
from .semirings import INF
from .wfst import Wfst, connect, is_deterministic, topological_order

START_LABEL = -1
END_LABEL = -2

# Tolerance for probabilities that drift above 1 through float division.
_PROB_SLACK = 1e-9


class Edge(NamedTuple):
    src: int
    dst: int
    weight: float


@dataclass(frozen=True)
class GtcGraph:
    """Immutable supervision graph.

    ``labels[g]`` is the symbol index of emitting node g (blank is index 0);
    the start/end terminals hold negative sentinels. Edges are kept sorted
    by (src, dst) so equal graphs compare and serialize identically.
    """

    alphabet: Alphabet
    labels: tuple[int, ...]
    edges: tuple[Edge, ...]

    def __post_init__(self):
        edges = tuple(sorted(Edge(int(s), int(d), float(w)) for s, d, w in self.edges))
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "labels", tuple(int(l) for l in self.labels))
        self._validate()

    # -- structure ---------------------------------------------------------

    @property
    def num_nodes(self) -> int:
        return len(self.labels)

    @property
    def end(self) -> int:
        return len(self.labels) - 1

    @property
    def num_emitting(self) -> int:
        return len(self.labels) - 2

    def emitting_nodes(self) -> range:
        return range(1, self.end)

    def label(self, g: int) -> int:
        return self.labels[g]

    def token(self, g: int) -> str:
        return self.alphabet.token(self.labels[g])

    @property
    def num_non_blank(self) -> int:
        return sum(1 for g in self.emitting_nodes() if self.labels[g] != BLANK)

    def successors(self) -> list[list[Edge]]:
        succ: list[list[Edge]] = [[] for _ in range(self.num_nodes)]
        for e in self.edges:
            succ[e.src].append(e)
        return succ

    def _validate(self) -> None:
        n = len(self.labels)
        if n < 3:
            raise ValueError("graph needs at least one emitting node")
        if self.labels[0] != START_LABEL or self.labels[-1] != END_LABEL:
            raise ValueError("terminal nodes must be the non-emitting start and end")
        for g in range(1, n - 1):
            if not 0 <= self.labels[g] < len(self.alphabet):
                raise ValueError(f"node {g} label {self.labels[g]} outside alphabet")
        if not self.edges:
            raise ValueError("graph has no edges")
        seen: set[tuple[int, int]] = set()
        for e in self.edges:
            if not (0 <= e.src < n and 0 <= e.dst < n):
                raise ValueError(f"edge {e.src}->{e.dst} references unknown node")
            if (e.src, e.dst) in seen:
                raise ValueError(f"duplicate edge {e.src}->{e.dst}")
            seen.add((e.src, e.dst))
            if e.dst == 0:
                raise ValueError("start node cannot have incoming edges")
            if e.src == n - 1:
                raise ValueError("end node cannot have outgoing edges")
            if e.src == 0 and e.dst == n - 1:
                raise ValueError("start cannot connect directly to end")
            if e.src == e.dst and e.src in (0, n - 1):
                raise ValueError("terminal nodes cannot carry self-loops")
            if e.src != e.dst and e.src >= e.dst:
                raise ValueError(f"edge {e.src}->{e.dst} violates topological node order")
            if not (0.0 < e.weight <= 1.0 + _PROB_SLACK) or math.isnan(e.weight):
                raise ValueError(f"edge {e.src}->{e.dst} weight {e.weight} is not a "
                                 "positive probability")
        fwd = {0}
        for e in self.edges:  # edges sorted by src, so one sweep reaches fixpoint
            if e.src in fwd:
                fwd.add(e.dst)
        bwd = {n - 1}
        for e in reversed(self.edges):
            if e.dst in bwd:
                bwd.add(e.src)
        stranded = set(range(n)) - (fwd & bwd)
        if stranded:
            raise ValueError(f"nodes {sorted(stranded)} lie on no start-to-end path")


def unit_weights(graph: GtcGraph) -> GtcGraph:
    """Same topology with every transition weight set to 1."""
    return GtcGraph(graph.alphabet, graph.labels,
                    tuple(Edge(e.src, e.dst, 1.0) for e in graph.edges))


def ctc_linear_graph(labels: Sequence[str] | Sequence[int], alphabet: Alphabet) -> GtcGraph:
    """CTC topology for a single label sequence, unit weights.

    Blank nodes interleave the labels; every emitting node self-loops;
    blanks between distinct consecutive labels can be skipped. Training
    against this graph is exactly CTC training on ``labels``.
    """
    if len(labels) == 0:
        raise ValueError("empty label sequence")
    idx = [alphabet.index(l) if isinstance(l, str) else int(l) for l in labels]
    for orig, k in zip(labels, idx):
        if not 0 <= k < len(alphabet):
            raise ValueError(f"label {orig!r} not in alphabet")
        if k == BLANK:
            raise ValueError("blank cannot appear in a label sequence")
    L = len(idx)
    # nodes: start, blank_1, l_1, blank_2, l_2, ..., blank_L, l_L, blank_{L+1}, end
    node_labels = [START_LABEL]
    for k in idx:
        node_labels += [BLANK, k]
    node_labels += [BLANK, END_LABEL]
    end = len(node_labels) - 1
    edges = [Edge(0, 1, 1.0), Edge(0, 2, 1.0)]
    for i in range(1, L + 1):
        b, l = 2 * i - 1, 2 * i
        edges += [Edge(b, b, 1.0), Edge(b, l, 1.0), Edge(l, l, 1.0), Edge(l, l + 1, 1.0)]
        if i < L:
            if idx[i] != idx[i - 1]:
                edges.append(Edge(l, l + 2, 1.0))  # skip blank between distinct labels
    last_b = 2 * L + 1
    edges += [Edge(last_b, last_b, 1.0), Edge(2 * L, end, 1.0), Edge(last_b, end, 1.0)]
    return GtcGraph(alphabet, tuple(node_labels), tuple(edges))


def _arc_prob(cost: float) -> float:
    p = math.exp(-cost)
    if not 0.0 < p <= 1.0 + _PROB_SLACK:
        raise ValueError(f"arc weight {cost} is not a negative log probability")
    return min(p, 1.0)


def wfst_to_ctc_graph(fst: Wfst, alphabet: Alphabet) -> GtcGraph:
    """Expand a deterministic acyclic acceptor into a CTC-style graph.

    Each automaton state becomes a blank node and each arc a node labeled
    with the arc symbol. The arc's probability sits on every edge entering
    its node, so each complete graph path ending at a final state keeps
    exactly the probability of the automaton path it spells. Blanks are
    skippable between distinct adjacent labels; final-state weights label
    the edges into the end terminal.
    """
    if any(a.ilabel == EPSILON or a.olabel == EPSILON for a in fst.arcs):
        raise ValueError("wfst_to_ctc_graph expects an epsilon-free machine")
    if not fst.is_acceptor():
        raise ValueError("wfst_to_ctc_graph expects an acceptor")
    fst = connect(fst)
    if fst.start is None:
        raise ValueError("machine accepts nothing")
    if not is_deterministic(fst):
        raise NondeterministicError("wfst_to_ctc_graph expects a deterministic machine")
    order = topological_order(fst)
    out = fst.out_arcs()
    for s in range(fst.num_states):
        out[s] = sorted(out[s], key=lambda a: a.ilabel)

    node_labels: list[int] = [START_LABEL]
    blank_node: dict[int, int] = {}
    arc_node: dict[tuple[int, int], int] = {}  # (state, arc position) -> node
    arc_prob: dict[tuple[int, int], float] = {}
    for s in order:
        blank_node[s] = len(node_labels)
        node_labels.append(BLANK)
        for i, a in enumerate(out[s]):
            if a.ilabel == alphabet.token(BLANK):
                raise ValueError("blank token cannot label an automaton arc")
            arc_node[(s, i)] = len(node_labels)
            node_labels.append(alphabet.index(a.ilabel))
            arc_prob[(s, i)] = _arc_prob(a.weight)
    node_labels.append(END_LABEL)
    end = len(node_labels) - 1

    edges: list[Edge] = []

    def enter_arcs_of(state: int, from_node: int, skip_label: int | None) -> None:
        # edges from `from_node` into every arc node leaving `state`
        for i, a in enumerate(out[state]):
            lab = alphabet.index(a.ilabel)
            if skip_label is not None and lab == skip_label:
                continue
            edges.append(Edge(from_node, arc_node[(state, i)], arc_prob[(state, i)]))

    s0 = fst.start
    edges.append(Edge(0, blank_node[s0], 1.0))
    enter_arcs_of(s0, 0, None)
    for s in order:
        b = blank_node[s]
        edges.append(Edge(b, b, 1.0))
        enter_arcs_of(s, b, None)
        if s in fst.finals:
            edges.append(Edge(b, end, _arc_prob(fst.finals[s])))
        for i, a in enumerate(out[s]):
            n = arc_node[(s, i)]
            lab = alphabet.index(a.ilabel)
            edges.append(Edge(n, n, 1.0))
            edges.append(Edge(n, blank_node[a.dst], 1.0))
            enter_arcs_of(a.dst, n, skip_label=lab)  # blank skip, distinct labels only
            if a.dst in fst.finals:
                edges.append(Edge(n, end, _arc_prob(fst.finals[a.dst])))
    return GtcGraph(alphabet, tuple(node_labels), tuple(edges))


def unfold(graph: GtcGraph, T: int, max_paths: int | None = None) -> list[tuple[int, ...]]:
    """All node walks (0, π₁, …, π_T, end): exactly T emitting steps.

    Enumeration is exponential; callers bound the instance size (pass
    ``max_paths`` to fail fast via BudgetExceededError instead of hanging).
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    succ = graph.successors()
    end = graph.end
    # prune: deepest frame from which each node can still reach the end
    reach: list[set[int]] = [set() for _ in range(T + 2)]
    reach[T + 1] = {end}
    for t in range(T, 0, -1):
        for e in graph.edges:
            if e.dst in reach[t + 1]:
                reach[t].add(e.src)
    paths: list[tuple[int, ...]] = []
    prefix = [0]

    def walk(node: int, t: int) -> None:
        if t == T + 1:
            if node == end:
                paths.append(tuple(prefix))
                if max_paths is not None and len(paths) > max_paths:
                    raise BudgetExceededError(f"more than {max_paths} unfolded paths")
            return
        for e in succ[node]:
            if e.dst in reach[t + 1]:
                prefix.append(e.dst)
                walk(e.dst, t + 1)
                prefix.pop()

    walk(0, 0)
    return paths


def walk_count(graph: GtcGraph, T: int) -> int:
    """Number of length-T unfoldings, by exact adjacency-power counting."""
    if T < 1:
        raise ValueError("T must be >= 1")
    counts = [0] * graph.num_nodes
    counts[0] = 1
    for _ in range(T + 1):
        nxt = [0] * graph.num_nodes
        for e in graph.edges:
            if counts[e.src]:
                nxt[e.dst] += counts[e.src]
        counts = nxt
    return counts[graph.end]


def min_unfold_length(graph: GtcGraph) -> int:
    """Shortest interior walk length; frames below this are infeasible."""
    dist = [INF] * graph.num_nodes
    dist[0] = 0
    for e in self_loop_free(graph):  # sorted by src: one relaxation sweep suffices
        if dist[e.src] + 1 < dist[e.dst]:
            dist[e.dst] = dist[e.src] + 1
    return int(dist[graph.end]) - 1


def self_loop_free(graph: GtcGraph) -> Iterator[Edge]:
    return (e for e in graph.edges if e.src != e.dst)


def is_feasible(graph: GtcGraph, T: int) -> bool:
    return T >= min_unfold_length(graph)


def collapse_path(graph: GtcGraph, path: Sequence[int]) -> tuple[str, ...]:
    """CTC collapse of an unfolded path: drop repeats, then blanks."""
    toks: list[str] = []
    prev = None
    for g in path[1:-1]:
        k = graph.labels[g]
        if k != prev and k != BLANK:
            toks.append(graph.alphabet.token(k))
        prev = k
    return tuple(toks)


def graph_density(graph: GtcGraph, ref_len: int) -> float:
    """Non-blank node count over reference length (compactness measure)."""
    if ref_len < 1:
        raise ValueError("ref_len must be >= 1")
    return graph.num_non_blank / ref_len
