"""Supervision-graph construction, unfolding, and structural invariants."""

import math

import numpy as np
import pytest

from gtc.errors import CyclicMachineError

from gtc.alphabet import BLANK, Alphabet
from gtc.graph import (
    END_LABEL,
    START_LABEL,
    Edge,
    GtcGraph,
    collapse_path,
    ctc_linear_graph,
    graph_density,
    is_feasible,
    min_unfold_length,
    unfold,
    unit_weights,
    walk_count,
    wfst_to_ctc_graph,
)
from gtc.oracles import enumerate_strings, graph_strings
from gtc.semirings import LOG
from gtc.wfst import Wfst, linear_acceptor, optimize

from conftest import ABC, random_graph, small_graph_and_T


def edge_pairs(graph: GtcGraph) -> set[tuple[int, int]]:
    return {(e.src, e.dst) for e in graph.edges}


# -- CTC linear graphs -----------------------------------------------------------

def test_linear_graph_single_label_structure():
    g = ctc_linear_graph(("a",), ABC)
    assert g.labels == (START_LABEL, BLANK, ABC.index("a"), BLANK, END_LABEL)
    assert edge_pairs(g) == {
        (0, 1), (0, 2),              # start to first blank or the label
        (1, 1), (2, 2), (3, 3),      # self-loops on all emitting nodes
        (1, 2), (2, 3),              # blank-label chain
        (2, 4), (3, 4),              # label or trailing blank to end
    }
    assert all(e.weight == 1.0 for e in g.edges)


def test_linear_graph_alternates_blank_label():
    g = ctc_linear_graph(("a", "b", "c"), ABC)
    want = [BLANK, ABC.index("a"), BLANK, ABC.index("b"), BLANK,
            ABC.index("c"), BLANK]
    assert list(g.labels[1:-1]) == want


def test_linear_graph_skip_only_between_distinct_labels():
    # label nodes sit at even positions 2, 4; a skip jumps over the blank
    assert (2, 4) in edge_pairs(ctc_linear_graph(("a", "b"), ABC))
    assert (2, 4) not in edge_pairs(ctc_linear_graph(("a", "a"), ABC))


def test_linear_graph_rejects_bad_labels():
    with pytest.raises(ValueError):
        ctc_linear_graph((), ABC)
    with pytest.raises(ValueError):
        ctc_linear_graph(("z",), ABC)


def test_linear_graph_accepts_indices():
    assert ctc_linear_graph((1, 2), ABC) == ctc_linear_graph(("a", "b"), ABC)


# -- conversion from acceptors ------------------------------------------------------

def test_single_arc_fst_equals_linear_graph():
    fst = linear_acceptor(["a"], [0.0])  # cost 0 = probability 1
    assert wfst_to_ctc_graph(fst, ABC) == ctc_linear_graph(("a",), ABC)


def test_repeated_label_chain_has_no_middle_skip():
    fst = linear_acceptor(["a", "a"], [0.0, 0.0])
    g = wfst_to_ctc_graph(fst, ABC)
    assert g.labels == (START_LABEL, BLANK, ABC.index("a"), BLANK,
                        ABC.index("a"), BLANK, END_LABEL)
    assert (2, 4) not in edge_pairs(g)
    # the distinct-label version does get the skip
    g2 = wfst_to_ctc_graph(linear_acceptor(["a", "b"], [0.0, 0.0]), ABC)
    assert (2, 4) in edge_pairs(g2)


def test_conversion_keeps_language_of_linear_machine():
    fst = linear_acceptor(["a", "b", "a"], [0.1, 0.2, 0.3])
    g = wfst_to_ctc_graph(fst, ABC)
    assert graph_strings(g) == {("a", "b", "a")}


def union_acceptor(strings) -> Wfst:
    """Probability-normalized union: each string carries mass 1/k."""
    acc = Wfst()
    root = acc.add_state()
    acc.set_start(root)
    for s in strings:
        prev = root
        for i, tok in enumerate(s):
            nxt = acc.add_state()
            acc.add_arc(prev, nxt, tok, math.log(len(strings)) if i == 0 else 0.0)
            prev = nxt
        acc.set_final(prev, 0.0)
    return acc


def test_conversion_covers_all_accepted_strings(rng):
    # every string of the source machine must be spellable in the graph;
    # skip edges may add recombined strings on top
    for _ in range(20):
        strings = {tuple(rng.choice(["a", "b", "c"], size=rng.integers(1, 5)))
                   for _ in range(4)}
        g = wfst_to_ctc_graph(optimize(union_acceptor(strings), LOG), ABC)
        assert graph_strings(g) >= strings


def hello_world_sausage() -> Wfst:
    """Confusion-network shape aligning HELO_WORLD / HELLO_WOLD /
    HELO_WOLD / HELLOWLD (space written `_`, optional slots carry ε)."""
    bins = [("H",), ("E",), ("L", "<eps>"), ("L",), ("O",), ("_", "<eps>"),
            ("W",), ("O", "<eps>"), ("R", "<eps>"), ("L",), ("D",)]
    acc = Wfst()
    acc.add_states(len(bins) + 1)
    acc.set_start(0)
    acc.set_final(len(bins), 0.0)
    for i, options in enumerate(bins):
        for tok in options:
            acc.add_arc(i, i + 1, tok, math.log(len(options)))
    return optimize(acc, LOG)


def test_unseen_transcription_recoverable():
    letters = Alphabet.from_tokens(sorted(set("HELO_WRD")))
    graph = wfst_to_ctc_graph(hello_world_sausage(), letters)
    strings = graph_strings(graph)
    # no single hypothesis spells the truth, but the aligned bins do
    hyps = ["HELO_WORLD", "HELLO_WOLD", "HELO_WOLD", "HELLOWLD"]
    assert all(tuple(h) in strings for h in hyps)
    assert tuple("HELLO_WORLD") in strings


def test_conversion_rejects_eps_and_cycles():
    m = Wfst()
    m.add_states(2)
    m.set_start(0)
    m.add_arc(0, 1, "<eps>", 0.0)
    m.set_final(1, 0.0)
    with pytest.raises(ValueError):
        wfst_to_ctc_graph(m, ABC)
    c = Wfst()
    c.add_states(2)
    c.set_start(0)
    c.add_arc(0, 1, "a", 0.0)
    c.add_arc(1, 0, "a", 0.0)
    c.set_final(1, 0.0)
    with pytest.raises(CyclicMachineError):
        wfst_to_ctc_graph(c, ABC)


# -- unfolding --------------------------------------------------------------------

def test_unfold_single_node_self_loop():
    g = GtcGraph(ABC, (START_LABEL, ABC.index("a"), END_LABEL),
                 (Edge(0, 1, 1.0), Edge(1, 1, 1.0), Edge(1, 2, 1.0)))
    assert unfold(g, 3) == [(0, 1, 1, 1, 2)]


def test_unfold_one_label_ctc_graph():
    g = ctc_linear_graph(("a",), ABC)
    paths = unfold(g, 2)
    assert sorted(paths) == [(0, 1, 2, 4), (0, 2, 2, 4), (0, 2, 3, 4)]
    assert walk_count(g, 2) == 3


def test_unfold_too_short_is_empty():
    g = ctc_linear_graph(("a", "b", "c"), ABC)
    assert min_unfold_length(g) == 3
    assert unfold(g, 2) == []
    assert walk_count(g, 2) == 0
    assert not is_feasible(g, 2)
    assert is_feasible(g, 3)


def test_walk_count_matches_adjacency_power(rng):
    for _ in range(40):
        g = random_graph(rng, max_emitting=6)
        T = int(rng.integers(1, 9))
        n = g.num_nodes
        A = np.zeros((n, n), dtype=object)  # exact integer arithmetic
        for e in g.edges:
            A[e.src, e.dst] = 1
        count = int(np.linalg.matrix_power(A, T + 1)[0, n - 1])
        assert walk_count(g, T) == count


def test_unfold_count_matches_walk_count(rng):
    for _ in range(25):
        g, T = small_graph_and_T(rng, max_emitting=6, max_T=8)
        paths = unfold(g, T)
        assert len(paths) == walk_count(g, T)
        assert len(set(paths)) == len(paths)
        for p in paths:
            assert len(p) == T + 2 and p[0] == 0 and p[-1] == g.end


def test_unfold_paths_follow_edges(rng):
    g, T = small_graph_and_T(rng, max_emitting=5, max_T=7)
    allowed = edge_pairs(g)
    for p in unfold(g, T):
        assert all((a, b) in allowed for a, b in zip(p, p[1:]))


# -- collapse ---------------------------------------------------------------------

def test_collapse_inverts_linear_graph(rng):
    for _ in range(25):
        labels = tuple(rng.choice(["a", "b", "c"], size=rng.integers(1, 4)))
        g = ctc_linear_graph(labels, ABC)
        T = int(rng.integers(min_unfold_length(g), min_unfold_length(g) + 3))
        paths = unfold(g, T)
        assert paths
        for p in paths:
            assert collapse_path(g, p) == labels


def test_collapse_drops_repeats_then_blanks():
    g = ctc_linear_graph(("a", "b"), ABC)
    # nodes: 0=start 1=ε 2=a 3=ε 4=b 5=ε 6=end
    assert collapse_path(g, (0, 1, 2, 2, 3, 4, 6)) == ("a", "b")
    assert collapse_path(g, (0, 2, 4, 6)) == ("a", "b")


def test_collapsed_unfoldings_stay_in_source_language(rng):
    for _ in range(10):
        fst = optimize(linear_acceptor(["a", "b"], [0.2, 0.1]), LOG)
        g = wfst_to_ctc_graph(fst, ABC)
        accepted = set(enumerate_strings(fst).weights)
        for p in unfold(g, 4):
            assert collapse_path(g, p) in accepted


# -- density and weights ---------------------------------------------------------

def test_density_of_own_reference_is_one():
    labels = ("a", "b", "a", "c")
    assert graph_density(ctc_linear_graph(labels, ABC), len(labels)) == 1.0


def test_density_is_plain_ratio():
    g = ctc_linear_graph(tuple(["a", "b", "c"] * 4), ABC)
    assert g.num_non_blank == 12
    assert graph_density(g, 10) == pytest.approx(1.2)


def test_density_rejects_zero_reference():
    with pytest.raises(ValueError):
        graph_density(ctc_linear_graph(("a",), ABC), 0)


def test_unit_weights_strips_probabilities(rng):
    g = random_graph(rng, unit=False)
    u = unit_weights(g)
    assert u.labels == g.labels
    assert edge_pairs(u) == edge_pairs(g)
    assert all(e.weight == 1.0 for e in u.edges)
    assert unit_weights(u) == u


# -- validation -------------------------------------------------------------------

def test_random_graphs_keep_topological_order(rng):
    for _ in range(40):
        g = random_graph(rng)
        assert all(e.src < e.dst for e in g.edges if e.src != e.dst)


def test_validation_rejects_malformed_graphs():
    a = ABC.index("a")
    good = (Edge(0, 1, 1.0), Edge(1, 2, 1.0))
    GtcGraph(ABC, (START_LABEL, a, END_LABEL), good)
    cases = [
        (Edge(0, 1, 1.0), Edge(1, 0, 1.0)),        # edge back into start
        (Edge(0, 1, 1.0), Edge(2, 1, 1.0)),        # edge out of end
        (Edge(0, 2, 1.0),),                        # start wired straight to end
        (Edge(0, 1, 0.0), Edge(1, 2, 1.0)),        # zero weight
        (Edge(0, 1, -0.5), Edge(1, 2, 1.0)),       # negative weight
        (Edge(0, 1, 1.0),),                        # node 1 cannot reach end
    ]
    for edges in cases:
        with pytest.raises(ValueError):
            GtcGraph(ABC, (START_LABEL, a, END_LABEL), edges)
    with pytest.raises(ValueError):  # boundary sentinels missing
        GtcGraph(ABC, (a, a, a), good)
