"""Weighted finite-state acceptors and transducers over cost semirings.

Everything here targets the acyclic machines produced by the pseudo-label
pipeline. The single cyclic citizen is the one-state edit-distance
transducer, which only ever appears as the middle factor of a composition
and is never optimized or searched directly.

Arc weights are costs (negative log probabilities); see
:mod:`gtc.semirings`.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Iterable, NamedTuple, Sequence

from .alphabet import EPSILON
from .errors import (
    AlphabetMismatchError,
    CyclicMachineError,
    EmptyLanguageError,
    NondeterministicError,
)
from .semirings import INF, LOG, TROPICAL, Semiring

# Quantum used when float weights act as dictionary keys.
_WEIGHT_QUANTUM = 1e-9
_RESIDUAL_QUANTUM = 1e-12


class Arc(NamedTuple):
    src: int
    dst: int
    ilabel: str
    olabel: str
    weight: float


class Wfst:
    """Mutable-while-building automaton; treat as immutable afterwards.

    A machine is an acceptor when every arc has ``ilabel == olabel``; the
    pipeline only serializes acceptors.
    """

    def __init__(self):
        self.num_states = 0
        self.start: int | None = None
        self.arcs: list[Arc] = []
        self.finals: dict[int, float] = {}

    def add_state(self) -> int:
        self.num_states += 1
        return self.num_states - 1

    def add_states(self, n: int) -> None:
        self.num_states += n

    def set_start(self, state: int) -> None:
        self._check_state(state)
        self.start = state

    def set_final(self, state: int, weight: float = 0.0) -> None:
        self._check_state(state)
        self.finals[state] = weight

    def add_arc(self, src: int, dst: int, ilabel: str, weight: float,
                olabel: str | None = None) -> None:
        self._check_state(src)
        self._check_state(dst)
        self.arcs.append(Arc(src, dst, ilabel, ilabel if olabel is None else olabel,
                             float(weight)))

    def _check_state(self, state: int) -> None:
        if not 0 <= state < self.num_states:
            raise ValueError(f"state {state} out of range 0..{self.num_states - 1}")

    def is_acceptor(self) -> bool:
        return all(a.ilabel == a.olabel for a in self.arcs)

    def out_arcs(self) -> list[list[Arc]]:
        """Arcs grouped by source state, in insertion order."""
        out: list[list[Arc]] = [[] for _ in range(self.num_states)]
        for a in self.arcs:
            out[a.src].append(a)
        return out

    def copy(self) -> "Wfst":
        m = Wfst()
        m.num_states = self.num_states
        m.start = self.start
        m.arcs = list(self.arcs)
        m.finals = dict(self.finals)
        return m

    def __repr__(self):
        return (f"Wfst(states={self.num_states}, arcs={len(self.arcs)}, "
                f"finals={len(self.finals)})")


def linear_acceptor(tokens: Sequence[str], weights: Sequence[float] | None = None) -> Wfst:
    """Single-path acceptor for a token sequence (unit weights by default)."""
    m = Wfst()
    m.add_states(len(tokens) + 1)
    m.set_start(0)
    for i, tok in enumerate(tokens):
        w = 0.0 if weights is None else weights[i]
        m.add_arc(i, i + 1, tok, w)
    m.set_final(len(tokens), 0.0)
    return m


def edit_distance_fst(tokens: Iterable[str]) -> Wfst:
    """One-state transducer charging 1 per substitution/insertion/deletion.

    Matches are free. Composing ``hyp ∘ edit ∘ ref`` in the tropical
    semiring yields Levenshtein alignment costs as path weights.
    """
    m = Wfst()
    m.add_state()
    m.set_start(0)
    m.set_final(0, 0.0)
    toks = list(tokens)
    for a in toks:
        m.add_arc(0, 0, a, 0.0, a)          # match
        m.add_arc(0, 0, a, 1.0, EPSILON)    # deletion (hyp token unmatched)
        m.add_arc(0, 0, EPSILON, 1.0, a)    # insertion (ref token unmatched)
        for b in toks:
            if b != a:
                m.add_arc(0, 0, a, 1.0, b)  # substitution
    return m


def topological_order(fst: Wfst) -> list[int]:
    """Topological state order; raises CyclicMachineError on any cycle.

    Self-loops count as cycles, so this doubles as the acyclicity check.
    """
    indeg = [0] * fst.num_states
    succ: list[list[int]] = [[] for _ in range(fst.num_states)]
    for a in fst.arcs:
        succ[a.src].append(a.dst)
        indeg[a.dst] += 1
    ready = sorted(s for s in range(fst.num_states) if indeg[s] == 0)
    order: list[int] = []
    while ready:
        s = ready.pop(0)
        order.append(s)
        for t in succ[s]:
            indeg[t] -= 1
            if indeg[t] == 0:
                ready.append(t)
    if len(order) != fst.num_states:
        raise CyclicMachineError("machine has a cycle")
    return order


def connect(fst: Wfst) -> Wfst:
    """Keep only states on some start-to-final path; ids keep relative order."""
    if fst.start is None:
        return Wfst()
    fwd = {fst.start}
    frontier = [fst.start]
    succ = defaultdict(list)
    pred = defaultdict(list)
    for a in fst.arcs:
        succ[a.src].append(a.dst)
        pred[a.dst].append(a.src)
    while frontier:
        s = frontier.pop()
        for t in succ[s]:
            if t not in fwd:
                fwd.add(t)
                frontier.append(t)
    bwd = set(fst.finals)
    frontier = list(fst.finals)
    while frontier:
        s = frontier.pop()
        for t in pred[s]:
            if t not in bwd:
                bwd.add(t)
                frontier.append(t)
    keep = sorted(fwd & bwd)
    if fst.start not in keep:
        return Wfst()
    remap = {s: i for i, s in enumerate(keep)}
    m = Wfst()
    m.add_states(len(keep))
    m.set_start(remap[fst.start])
    for a in fst.arcs:
        if a.src in remap and a.dst in remap:
            m.add_arc(remap[a.src], remap[a.dst], a.ilabel, a.weight, a.olabel)
    for s, w in fst.finals.items():
        if s in remap:
            m.set_final(remap[s], w)
    return m


def merge_parallel_arcs(fst: Wfst, sr: Semiring = LOG) -> Wfst:
    """⊕-combine arcs that share (src, dst, ilabel, olabel)."""
    combined: dict[tuple, float] = {}
    order: list[tuple] = []
    for a in fst.arcs:
        key = (a.src, a.dst, a.ilabel, a.olabel)
        if key in combined:
            combined[key] = sr.plus(combined[key], a.weight)
        else:
            combined[key] = a.weight
            order.append(key)
    m = Wfst()
    m.num_states = fst.num_states
    m.start = fst.start
    m.finals = dict(fst.finals)
    for key in order:
        src, dst, il, ol = key
        m.arcs.append(Arc(src, dst, il, ol, combined[key]))
    return m


def _require_acceptor(fst: Wfst, op: str) -> None:
    if not fst.is_acceptor():
        raise ValueError(f"{op} expects an acceptor")


def _require_epsilon_free(fst: Wfst, op: str) -> None:
    if any(a.ilabel == EPSILON for a in fst.arcs):
        raise ValueError(f"{op} expects an epsilon-free machine")


def remove_epsilon(fst: Wfst, sr: Semiring = LOG) -> Wfst:
    """Eliminate ε arcs from an acyclic acceptor, preserving string weights.

    States are processed deepest-first, so each ε arc points at an
    already-clean state and a single folding pass suffices.
    """
    _require_acceptor(fst, "remove_epsilon")
    order = topological_order(fst)
    if fst.start is None:
        return Wfst()
    out = fst.out_arcs()
    clean_out: dict[int, list[Arc]] = {}
    clean_final: dict[int, float] = {}
    for s in reversed(order):
        arcs: list[Arc] = []
        final = fst.finals.get(s, sr.zero)
        for a in out[s]:
            if a.ilabel == EPSILON:
                for b in clean_out[a.dst]:
                    arcs.append(Arc(s, b.dst, b.ilabel, b.olabel,
                                    sr.times(a.weight, b.weight)))
                tf = clean_final.get(a.dst)
                if tf is not None:
                    final = sr.plus(final, sr.times(a.weight, tf))
            else:
                arcs.append(a)
        clean_out[s] = arcs
        if final != sr.zero:
            clean_final[s] = final
    m = Wfst()
    m.num_states = fst.num_states
    m.start = fst.start
    for s in order:
        m.arcs.extend(clean_out[s])
    m.finals = clean_final
    return connect(merge_parallel_arcs(m, sr))


def _quantize(w: float, quantum: float) -> int:
    if w == INF:
        return -1
    return round(w / quantum)


def determinize(fst: Wfst, sr: Semiring = LOG) -> Wfst:
    """Weighted subset construction for ε-free acyclic acceptors.

    Subsets carry residual weights; the common ⊕-mass of each subset is
    pushed onto the entering arc, so string weights are preserved.
    """
    _require_acceptor(fst, "determinize")
    _require_epsilon_free(fst, "determinize")
    topological_order(fst)
    if fst.start is None:
        return Wfst()
    out = fst.out_arcs()

    def key_of(subset: tuple[tuple[int, float], ...]) -> tuple:
        return tuple((q, _quantize(r, _RESIDUAL_QUANTUM)) for q, r in subset)

    result = Wfst()
    start_subset = ((fst.start, sr.one),)
    ids: dict[tuple, int] = {key_of(start_subset): result.add_state()}
    result.set_start(0)
    stack: list[tuple[int, tuple[tuple[int, float], ...]]] = [(0, start_subset)]
    while stack:
        sid, subset = stack.pop()
        final = sr.sum(sr.times(r, fst.finals[q])
                       for q, r in subset if q in fst.finals)
        if final != sr.zero:
            result.set_final(sid, final)
        by_label: dict[str, dict[int, float]] = defaultdict(dict)
        for q, r in subset:
            for a in out[q]:
                targets = by_label[a.ilabel]
                w = sr.times(r, a.weight)
                targets[a.dst] = sr.plus(targets.get(a.dst, sr.zero), w)
        for label in sorted(by_label):
            targets = by_label[label]
            total = sr.sum(targets.values())
            nxt = tuple(sorted((t, sr.divide(w, total)) for t, w in targets.items()))
            key = key_of(nxt)
            if key not in ids:
                ids[key] = result.add_state()
                stack.append((ids[key], nxt))
            result.add_arc(sid, ids[key], label, total)
    return connect(result)


def is_deterministic(fst: Wfst) -> bool:
    seen: set[tuple[int, str]] = set()
    for a in fst.arcs:
        key = (a.src, a.ilabel)
        if key in seen:
            return False
        seen.add(key)
    return True


def push_weights(fst: Wfst, sr: Semiring = LOG) -> Wfst:
    """Push weights toward the start of a connected acyclic machine.

    Afterwards the ⊕-mass of the residual language at every non-start
    state is the semiring one; the total mass sits on the start state's
    outgoing arcs (and final weight, if the start is final).
    """
    order = topological_order(fst)
    if fst.start is None:
        return Wfst()
    dist = [sr.zero] * fst.num_states
    out = fst.out_arcs()
    for s in reversed(order):
        d = fst.finals.get(s, sr.zero)
        for a in out[s]:
            d = sr.plus(d, sr.times(a.weight, dist[a.dst]))
        dist[s] = d
    m = Wfst()
    m.num_states = fst.num_states
    m.start = fst.start
    for a in fst.arcs:
        if a.src == fst.start:
            w = sr.times(a.weight, dist[a.dst])
        else:
            w = sr.times(sr.divide(a.weight, dist[a.src]), dist[a.dst])
        m.arcs.append(Arc(a.src, a.dst, a.ilabel, a.olabel, w))
    for s, w in fst.finals.items():
        m.finals[s] = w if s == fst.start else sr.divide(w, dist[s])
    return m


def minimize(fst: Wfst, sr: Semiring = LOG) -> Wfst:
    """Merge suffix-equivalent states of a deterministic acyclic acceptor.

    Weights are pushed toward the start first, then states are merged by
    partition refinement on (label, quantized weight, target block)
    signatures, which reduces the weighted problem to the classical one.
    """
    _require_acceptor(fst, "minimize")
    _require_epsilon_free(fst, "minimize")
    if not is_deterministic(fst):
        raise NondeterministicError("minimize expects a deterministic machine")
    fst = connect(fst)
    if fst.start is None:
        return Wfst()
    pushed = push_weights(fst, sr)
    out = pushed.out_arcs()

    def final_key(s: int) -> tuple:
        w = pushed.finals.get(s)
        return (w is not None, _quantize(w, _WEIGHT_QUANTUM) if w is not None else 0)

    block = {s: final_key(s) for s in range(pushed.num_states)}
    while True:
        sig = {}
        for s in range(pushed.num_states):
            arcs_sig = tuple(sorted(
                (a.ilabel, _quantize(a.weight, _WEIGHT_QUANTUM), block[a.dst])
                for a in out[s]))
            sig[s] = (block[s], arcs_sig)
        if len(set(sig.values())) == len(set(block.values())):
            break
        block = sig
    reps: dict = {}
    for s in range(pushed.num_states):  # representative = lowest state id
        reps.setdefault(block[s], s)
    order = sorted(set(reps.values()))
    remap_block = {b: i for i, b in enumerate(block[s] for s in order)}
    m = Wfst()
    m.add_states(len(order))
    m.set_start(remap_block[block[pushed.start]])
    for s in order:
        for a in out[s]:
            m.add_arc(remap_block[block[s]], remap_block[block[a.dst]],
                      a.ilabel, a.weight, a.olabel)
        if s in pushed.finals:
            m.set_final(remap_block[block[s]], pushed.finals[s])
    return connect(m)


def optimize(fst: Wfst, sr: Semiring = LOG) -> Wfst:
    """remove_epsilon, then determinize, then minimize."""
    return minimize(determinize(remove_epsilon(fst, sr), sr), sr)


def compose(a: Wfst, b: Wfst, sr: Semiring = TROPICAL) -> Wfst:
    """Product construction: accepts (x, z) with weight ⊕_y a(x,y) ⊗ b(y,z).

    ε arcs are handled without a composition filter, so redundant
    ε-interleavings may appear as parallel paths; in the idempotent
    tropical semiring, the intended use here, they cannot change any
    string weight.
    """
    if a.start is None or b.start is None:
        return Wfst()
    a_out = {lab for arc in a.arcs if (lab := arc.olabel) != EPSILON}
    b_in = {lab for arc in b.arcs if arc.ilabel != EPSILON for lab in [arc.ilabel]}
    if a_out and b_in and not (a_out & b_in):
        raise AlphabetMismatchError("composed machines share no symbol")
    b_by_ilabel: dict[int, dict[str, list[Arc]]] = defaultdict(lambda: defaultdict(list))
    for arc in b.arcs:
        b_by_ilabel[arc.src][arc.ilabel].append(arc)
    a_out_arcs = a.out_arcs()

    m = Wfst()
    ids: dict[tuple[int, int], int] = {}

    def state_of(pq: tuple[int, int]) -> int:
        if pq not in ids:
            ids[pq] = m.add_state()
            stack.append(pq)
        return ids[pq]

    stack: list[tuple[int, int]] = []
    start = (a.start, b.start)
    ids[start] = m.add_state()
    m.set_start(0)
    stack.append(start)
    while stack:
        p, q = stack.pop()
        if p in a.finals and q in b.finals:
            m.set_final(ids[(p, q)], sr.times(a.finals[p], b.finals[q]))
        src_id = ids[(p, q)]
        for x in a_out_arcs[p]:
            if x.olabel == EPSILON:
                d = state_of((x.dst, q))
                m.arcs.append(Arc(src_id, d, x.ilabel, EPSILON, x.weight))
            else:
                for y in b_by_ilabel[q][x.olabel]:
                    d = state_of((x.dst, y.dst))
                    m.arcs.append(Arc(src_id, d, x.ilabel, y.olabel,
                                      sr.times(x.weight, y.weight)))
        for y in b_by_ilabel[q][EPSILON]:
            d = state_of((p, y.dst))
            m.arcs.append(Arc(src_id, d, EPSILON, y.olabel, y.weight))
    return connect(m)


def shortest_distance(fst: Wfst, sr: Semiring = TROPICAL) -> float:
    """⊕-total over accepting paths of an acyclic machine.

    Tropical gives the single-source shortest path; the log semiring
    gives the full probability mass. Raises EmptyLanguageError when no
    accepting path exists.
    """
    if fst.start is None:
        raise EmptyLanguageError("machine accepts nothing")
    order = topological_order(fst)
    out = fst.out_arcs()
    dist = [sr.zero] * fst.num_states
    dist[fst.start] = sr.one
    for s in order:
        if dist[s] == sr.zero:
            continue
        for a in out[s]:
            dist[a.dst] = sr.plus(dist[a.dst], sr.times(dist[s], a.weight))
    total = sr.sum(sr.times(dist[s], w) for s, w in fst.finals.items())
    if total == sr.zero:
        raise EmptyLanguageError("machine accepts nothing")
    return total


def isomorphic(a: Wfst, b: Wfst, tol: float = 1e-9) -> bool:
    """Structural equality of deterministic connected machines.

    Matches states by parallel traversal from the starts; arc weights
    must agree within ``tol``.
    """
    if a.num_states != b.num_states or len(a.arcs) != len(b.arcs):
        return False
    if (a.start is None) != (b.start is None):
        return False
    if a.start is None:
        return True
    if not (is_deterministic(a) and is_deterministic(b)):
        raise NondeterministicError("isomorphism check expects deterministic machines")
    a_out = a.out_arcs()
    b_out = b.out_arcs()
    pair = {a.start: b.start}
    stack = [(a.start, b.start)]
    visited = {a.start}
    while stack:
        p, q = stack.pop()
        fa, fb = a.finals.get(p), b.finals.get(q)
        if (fa is None) != (fb is None):
            return False
        if fa is not None and abs(fa - fb) > tol:
            return False
        arcs_a = sorted(a_out[p], key=lambda x: (x.ilabel, x.olabel))
        arcs_b = sorted(b_out[q], key=lambda x: (x.ilabel, x.olabel))
        if len(arcs_a) != len(arcs_b):
            return False
        for x, y in zip(arcs_a, arcs_b):
            if x.ilabel != y.ilabel or x.olabel != y.olabel:
                return False
            if abs(x.weight - y.weight) > tol:
                return False
            if x.dst in pair:
                if pair[x.dst] != y.dst:
                    return False
            else:
                pair[x.dst] = y.dst
            if x.dst not in visited:
                visited.add(x.dst)
                stack.append((x.dst, y.dst))
    return True
