"""Pseudo-label graph construction from N-best decoder output.

Stages: (1) weight hypotheses by exp(mu * score) and align them into a
sausage confusion network around the best hypothesis, (2) compile the
sausage to an acceptor and optimize it in the log semiring, (3) expand the
acceptor into a CTC-style supervision graph. Pruning with threshold eta
can run after stage 1 (per bin) and after stage 2 (per state), always
keeping the best alternative and renormalizing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .alphabet import EPSILON, Alphabet
from .errors import EmptyLanguageError
from .graph import GtcGraph, graph_density, self_loop_free, unit_weights, wfst_to_ctc_graph
from .semirings import LOG, TROPICAL
from .wfst import (
    Wfst,
    compose,
    connect,
    edit_distance_fst,
    linear_acceptor,
    optimize,
    shortest_distance,
)

__all__ = [
    "Hypothesis", "NBestList", "ConfusionNetwork", "PipelineConfig",
    "hypothesis_weights", "nbest_to_cn", "prune_cn", "cn_to_wfst",
    "prune_wfst", "build_supervision_graph", "oracle_ler",
    "label_error_rate", "levenshtein",
]


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[str, ...]
    score: float

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not math.isfinite(self.score):
            raise ValueError("hypothesis score must be finite")


@dataclass(frozen=True)
class NBestList:
    utt_id: str
    hyps: tuple[Hypothesis, ...]

    def __post_init__(self):
        object.__setattr__(self, "hyps", tuple(self.hyps))
        if not self.hyps:
            raise ValueError("empty hypothesis list")

    def __len__(self) -> int:
        return len(self.hyps)

    @property
    def best(self) -> Hypothesis:
        return max(self.hyps, key=lambda h: h.score)


# A bin maps token (or the ε marker) to probability; stored as sorted
# tuples so networks hash and compare by value.
Bin = tuple[tuple[str, float], ...]


@dataclass(frozen=True)
class ConfusionNetwork:
    bins: tuple[Bin, ...]

    def __post_init__(self):
        canon = []
        for b in self.bins:
            entries = tuple(sorted((str(t), float(p)) for t, p in b))
            total = math.fsum(p for _, p in entries)
            if any(p < 0.0 for _, p in entries):
                raise ValueError("bin probabilities must be non-negative")
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"bin probabilities sum to {total}, expected 1")
            canon.append(entries)
        object.__setattr__(self, "bins", tuple(canon))

    def __len__(self) -> int:
        return len(self.bins)

    def bin_dicts(self) -> list[dict[str, float]]:
        return [dict(b) for b in self.bins]


@dataclass(frozen=True)
class PipelineConfig:
    mu: float = 0.6
    eta: float = 0.0
    unit_weights: bool = False
    prune_after_step1: bool = True
    prune_after_step2: bool = True

    def __post_init__(self):
        if self.mu < 0.0:
            raise ValueError("mu must be >= 0")
        if not 0.0 <= self.eta < 1.0:
            raise ValueError("eta must lie in [0, 1)")


def hypothesis_weights(nbest: NBestList, mu: float) -> list[float]:
    """Normalized exp(mu * score) weights; mu=0 ignores the scores."""
    scaled = [mu * h.score for h in nbest.hyps]
    top = max(scaled)
    exps = [math.exp(s - top) for s in scaled]
    total = math.fsum(exps)
    return [e / total for e in exps]


def _align(tokens: Sequence[str], bins: list[dict[str, float]]):
    """Levenshtein-align tokens against the current bins.

    A token matches a bin for free when the bin already contains it. On
    ties the diagonal wins over insertion over gap, which makes the
    sausage construction deterministic. Returns forward-order operations
    ('align' token into bin, 'gap' in bin, 'ins'ert new bin for token).
    """
    m, n = len(tokens), len(bins)
    D = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(1, m + 1):
        D[i][0] = i
    for j in range(1, n + 1):
        D[0][j] = j
    for i in range(1, m + 1):
        tok = tokens[i - 1]
        for j in range(1, n + 1):
            sub = 0 if tok in bins[j - 1] else 1
            D[i][j] = min(D[i - 1][j - 1] + sub, D[i - 1][j] + 1, D[i][j - 1] + 1)
    ops: list[tuple[str, str | None, int]] = []
    i, j = m, n
    while i > 0 or j > 0:
        if i > 0 and j > 0 and D[i][j] == D[i - 1][j - 1] + (
                0 if tokens[i - 1] in bins[j - 1] else 1):
            ops.append(("align", tokens[i - 1], j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and D[i][j] == D[i - 1][j] + 1:
            ops.append(("ins", tokens[i - 1], j))
            i -= 1
        else:
            ops.append(("gap", None, j - 1))
            j -= 1
    ops.reverse()
    return ops


def nbest_to_cn(nbest: NBestList, mu: float = 0.6) -> ConfusionNetwork:
    """Sausage construction around the heaviest hypothesis.

    The pivot seeds one bin per token; every further hypothesis is
    aligned against the bins grown so far. Aligned tokens add their
    hypothesis weight to the bin, gaps add ε mass, and unmatched tokens
    open fresh bins (ε-weighted by everything already processed).
    """
    weights = hypothesis_weights(nbest, mu)
    order = sorted(range(len(nbest.hyps)), key=lambda i: (-weights[i], i))
    pivot = nbest.hyps[order[0]]
    w0 = weights[order[0]]
    bins: list[dict[str, float]] = [{tok: w0} for tok in pivot.tokens]
    processed = w0
    for i in order[1:]:
        hyp, w = nbest.hyps[i], weights[i]
        merged: list[dict[str, float]] = []
        for op, tok, j in _align(hyp.tokens, bins):
            if op == "align":
                b = bins[j]
                b[tok] = b.get(tok, 0.0) + w
                merged.append(b)
            elif op == "gap":
                b = bins[j]
                b[EPSILON] = b.get(EPSILON, 0.0) + w
                merged.append(b)
            else:
                merged.append({tok: w, EPSILON: processed})
        bins = merged
        processed += w
    normed = []
    for b in bins:
        total = math.fsum(b.values())
        normed.append(tuple((t, p / total) for t, p in b.items()))
    return ConfusionNetwork(tuple(normed))


def prune_cn(cn: ConfusionNetwork, eta: float) -> ConfusionNetwork:
    """Drop bin entries below eta and renormalize; bins never empty out."""
    if not 0.0 <= eta < 1.0:
        raise ValueError("eta must lie in [0, 1)")
    pruned = []
    for b in cn.bins:
        best = max(b, key=lambda e: (e[1], e[0]))
        kept = [e for e in b if e[1] >= eta] or [best]
        total = math.fsum(p for _, p in kept)
        pruned.append(tuple((t, p / total) for t, p in kept))
    return ConfusionNetwork(tuple(pruned))


def cn_to_wfst(cn: ConfusionNetwork) -> Wfst:
    """Sausage acceptor, optimized in the log semiring.

    Per-string weights equal the product of bin probabilities over every
    sausage path spelling the string, summed across spellings.
    """
    chain = Wfst()
    chain.add_states(len(cn.bins) + 1)
    chain.set_start(0)
    chain.set_final(len(cn.bins), 0.0)
    for i, b in enumerate(cn.bins):
        for tok, p in b:
            if p > 0.0:
                chain.add_arc(i, i + 1, tok, -math.log(p))
    return optimize(chain, LOG)


def prune_wfst(fst: Wfst, eta: float, sr=LOG) -> Wfst:
    """Per-state arc pruning with renormalization.

    Assumes pushed weights (each state's arcs plus final weight form a
    distribution). Arcs with probability below eta are dropped, the
    best arc always survives, and the survivors are renormalized
    together with the final weight.
    """
    if not 0.0 <= eta < 1.0:
        raise ValueError("eta must lie in [0, 1)")
    if eta == 0.0 or fst.start is None:
        return fst
    out = fst.out_arcs()
    m = Wfst()
    m.num_states = fst.num_states
    m.start = fst.start
    threshold = -math.log(eta)
    for s in range(fst.num_states):
        arcs = out[s]
        if not arcs:
            if s in fst.finals:
                m.finals[s] = fst.finals[s]
            continue
        best = min(range(len(arcs)), key=lambda i: (arcs[i].weight, arcs[i].ilabel))
        kept = [a for i, a in enumerate(arcs)
                if a.weight <= threshold or i == best]
        total = sr.sum(a.weight for a in kept)
        if s in fst.finals:
            total = sr.plus(total, fst.finals[s])
            m.finals[s] = sr.divide(fst.finals[s], total)
        for a in kept:
            m.add_arc(a.src, a.dst, a.ilabel, sr.divide(a.weight, total), a.olabel)
    return connect(m)


def build_supervision_graph(nbest: NBestList, alphabet: Alphabet,
                            config: PipelineConfig = PipelineConfig()) -> GtcGraph:
    """Full pipeline: N-best list in, CTC-style supervision graph out."""
    cn = nbest_to_cn(nbest, config.mu)
    if config.eta > 0.0 and config.prune_after_step1:
        cn = prune_cn(cn, config.eta)
    fst = cn_to_wfst(cn)
    if config.eta > 0.0 and config.prune_after_step2:
        fst = prune_wfst(fst, config.eta)
    graph = wfst_to_ctc_graph(fst, alphabet)
    if config.unit_weights:
        graph = unit_weights(graph)
    return graph


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Unit-cost edit distance between two token sequences."""
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i]
        for j, z in enumerate(b, start=1):
            cur.append(min(prev[j - 1] + (x != z), prev[j] + 1, cur[j - 1] + 1))
        prev = cur
    return prev[len(b)]


def label_error_rate(hyp: Sequence[str], ref: Sequence[str]) -> float:
    if len(ref) == 0:
        raise ValueError("empty reference")
    return levenshtein(tuple(hyp), tuple(ref)) / len(ref)


def _graph_label_acceptor(graph: GtcGraph) -> Wfst:
    # arc label = destination node's symbol; blanks and terminals become ε
    acc = Wfst()
    acc.add_states(graph.num_nodes)
    acc.set_start(0)
    acc.set_final(graph.end, 0.0)
    for e in self_loop_free(graph):
        if e.dst == graph.end or graph.labels[e.dst] == 0:
            label = EPSILON
        else:
            label = graph.token(e.dst)
        acc.add_arc(e.src, e.dst, label, 0.0)
    return acc


def oracle_ler(subject: GtcGraph | NBestList | Sequence[Sequence[str]],
               ref: Sequence[str]) -> float:
    """Best achievable label error rate against the reference.

    For hypothesis lists this is the per-hypothesis Levenshtein minimum;
    for graphs, the spelled language is intersected with an edit-distance
    transducer and the reference, and the cheapest alignment wins.
    """
    ref = tuple(ref)
    if len(ref) == 0:
        raise ValueError("empty reference")
    if isinstance(subject, GtcGraph):
        acc = _graph_label_acceptor(subject)
        tokens = {subject.token(g) for g in subject.emitting_nodes()
                  if subject.labels[g] != 0}
        edit = edit_distance_fst(sorted(tokens | set(ref)))
        lattice = compose(compose(acc, edit, TROPICAL),
                          linear_acceptor(ref), TROPICAL)
        try:
            return shortest_distance(lattice, TROPICAL) / len(ref)
        except EmptyLanguageError:  # pragma: no cover - edit FST always aligns
            raise
    hyps = subject.hyps if isinstance(subject, NBestList) else subject
    seqs = [h.tokens if isinstance(h, Hypothesis) else tuple(h) for h in hyps]
    return min(levenshtein(s, ref) for s in seqs) / len(ref)


def graph_density_for(nbest: NBestList, alphabet: Alphabet,
                      config: PipelineConfig, ref_len: int) -> float:
    return graph_density(build_supervision_graph(nbest, alphabet, config), ref_len)
