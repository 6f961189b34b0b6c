"""Training objective against a supervision graph.

The probability of a graph given T frames of symbol posteriors is the sum
over all length-T start-to-end walks of the product of transition weights
and per-frame posteriors (one emitting node per frame). The loss is its
negative log; the gradient w.r.t. pre-softmax logits has the familiar
CTC shape: posterior minus expected node occupancy.

All trellis math runs in negative-log space; +inf is the zero-probability
sentinel. A frame count shorter than the graph's shortest walk is not an
error in the forward direction: the loss is +inf ("infeasible") and only
gradient computation refuses to proceed.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

from .alphabet import Alphabet
from .errors import AlphabetMismatchError, GtcError, InfeasibleError
from .graph import GtcGraph
from .semirings import INF

# Posteriors are clamped here before the log; the probability assembly
# divides by y, so exact zeros would poison it.
_POSTERIOR_FLOOR = 1e-30

# Inside the trellis loops, "no probability mass" is a huge finite cost
# instead of +inf: finite arithmetic can never produce NaN, so the per
# frame log-sum-exp needs no masking. Values above the cutoff are mapped
# back to the +inf sentinel on the way out.
_BIG = 1e300
_BIG_CUTOFF = 1e250


@dataclass(frozen=True)
class Posteriors:
    """T x |alphabet| matrix of per-frame symbol probabilities."""

    values: np.ndarray
    alphabet: Alphabet

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "values", v)
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValueError("posteriors must be a T x |alphabet| matrix with T >= 1")
        if v.shape[1] != len(self.alphabet):
            raise AlphabetMismatchError(
                f"posterior matrix has {v.shape[1]} columns for an alphabet of "
                f"{len(self.alphabet)} symbols")
        if not np.all((v > 0.0) & (v <= 1.0)):
            raise ValueError("posterior entries must lie in (0, 1]")
        err = np.max(np.abs(v.sum(axis=1) - 1.0))
        if err > 1e-9:
            raise ValueError(f"posterior rows must sum to 1 (off by {err:.2e})")

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    def neg_log(self) -> np.ndarray:
        return -np.log(np.maximum(self.values, _POSTERIOR_FLOOR))


@dataclass(frozen=True)
class Logits:
    """T x |alphabet| matrix of pre-softmax scores."""

    values: np.ndarray
    alphabet: Alphabet

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "values", v)
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValueError("logits must be a T x |alphabet| matrix with T >= 1")
        if v.shape[1] != len(self.alphabet):
            raise AlphabetMismatchError(
                f"logit matrix has {v.shape[1]} columns for an alphabet of "
                f"{len(self.alphabet)} symbols")
        if not np.all(np.isfinite(v)):
            raise ValueError("logits must be finite")

    def softmax(self) -> Posteriors:
        return Posteriors(softmax(self.values), self.alphabet)


def softmax(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    e = np.exp(v - v.max(axis=-1, keepdims=True))
    p = e / e.sum(axis=-1, keepdims=True)
    return np.maximum(p, _POSTERIOR_FLOOR)


@dataclass(frozen=True)
class Trellis:
    """Forward/backward state with rows 0..T+1 over all nodes.

    Row 0 of alpha is the start boundary, row T+1 holds the end-node
    total; beta mirrors this from the other side. ``log_pG`` is the
    natural log of the graph probability (-inf when infeasible).
    """

    alpha: np.ndarray
    beta: np.ndarray
    log_pG: float


class _Compiled(NamedTuple):
    emit_labels: np.ndarray   # (G,) symbol index of nodes 1..G
    fwd_src: np.ndarray       # edges into emitting nodes, sorted by dst
    fwd_w: np.ndarray
    fwd_starts: np.ndarray    # (G,) segment starts, segment g-1 feeds node g
    fwd_seg: np.ndarray       # edge slot -> 0-based segment id
    bwd_dst: np.ndarray       # edges out of emitting nodes, sorted by src
    bwd_w: np.ndarray
    bwd_starts: np.ndarray
    bwd_seg: np.ndarray
    exit_src: np.ndarray      # edges into the end terminal
    exit_w: np.ndarray
    entry_dst: np.ndarray     # edges out of the start terminal
    entry_w: np.ndarray
    label_perm: np.ndarray    # emitting nodes sorted by symbol, as 0-based columns
    label_starts: np.ndarray
    label_values: np.ndarray  # distinct symbols present in the graph


@lru_cache(maxsize=None)
def _compiled(graph: GtcGraph) -> _Compiled:
    n = graph.num_nodes
    end = graph.end
    src = np.array([e.src for e in graph.edges], dtype=np.int64)
    dst = np.array([e.dst for e in graph.edges], dtype=np.int64)
    w = -np.log(np.minimum([e.weight for e in graph.edges], 1.0))

    def grouped(mask: np.ndarray, key: np.ndarray):
        idx = np.flatnonzero(mask)
        idx = idx[np.argsort(key[idx], kind="stable")]
        starts = np.searchsorted(key[idx], np.arange(1, n - 1))
        bounds = np.append(starts, len(idx))
        seg = np.repeat(np.arange(n - 2), np.diff(bounds))
        return idx, starts, seg

    fwd_idx, fwd_starts, fwd_seg = grouped(dst != end, dst)  # includes entry edges
    bwd_idx, bwd_starts, bwd_seg = grouped(src != 0, src)    # includes exit edges
    exit_idx = np.flatnonzero(dst == end)
    entry_idx = np.flatnonzero(src == 0)

    emit_labels = np.array(graph.labels[1:-1], dtype=np.int64)
    label_perm = np.argsort(emit_labels, kind="stable")
    sorted_labels = emit_labels[label_perm]
    label_values = np.unique(sorted_labels)
    label_starts = np.searchsorted(sorted_labels, label_values)
    return _Compiled(
        emit_labels=emit_labels,
        fwd_src=src[fwd_idx], fwd_w=w[fwd_idx], fwd_starts=fwd_starts,
        fwd_seg=fwd_seg,
        bwd_dst=dst[bwd_idx], bwd_w=w[bwd_idx], bwd_starts=bwd_starts,
        bwd_seg=bwd_seg,
        exit_src=src[exit_idx], exit_w=w[exit_idx],
        entry_dst=dst[entry_idx], entry_w=w[entry_idx],
        label_perm=label_perm, label_starts=label_starts,
        label_values=label_values,
    )


def _neg_lse(vals: np.ndarray) -> float:
    """-log sum exp(-vals); +inf in, +inf out."""
    m = vals.min() if vals.size else INF
    if not np.isfinite(m):
        return INF
    return float(m - np.log(np.exp(m - vals).sum()))


class _Scratch:
    """Per-sweep buffers so the frame loop allocates nothing."""

    __slots__ = ("vals", "diff", "m", "sums")

    def __init__(self, num_edges: int, num_segments: int):
        self.vals = np.empty(num_edges)
        self.diff = np.empty(num_edges)
        self.m = np.empty(num_segments)
        self.sums = np.empty(num_segments)


def _segment_neg_lse(vals: np.ndarray, starts: np.ndarray, seg: np.ndarray,
                     s: _Scratch, out: np.ndarray) -> None:
    """Per-segment -log sum exp(-vals) into ``out``.

    Works entirely in the _BIG convention: inputs are finite, empty mass
    is ~1e300, and the minimum is itself a segment member, so exp never
    sees a positive argument and sums stay >= 1.
    """
    np.minimum.reduceat(vals, starts, out=s.m)
    np.take(s.m, seg, out=s.diff)
    s.diff -= vals
    np.exp(s.diff, out=s.diff)
    np.add.reduceat(s.diff, starts, out=s.sums)
    np.log(s.sums, out=s.sums)
    np.subtract(s.m, s.sums, out=out)


def _segment_neg_lse_2d(mat: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Row-wise segmented -log sum exp(-mat) over column groups."""
    m = np.minimum.reduceat(mat, starts, axis=1)
    lens = np.diff(np.append(starts, mat.shape[1]))
    rep = np.repeat(m, lens, axis=1)
    finite = np.isfinite(rep)
    diff = np.subtract(rep, mat, out=np.full_like(mat, -INF), where=finite)
    ex = np.zeros_like(mat)
    np.exp(diff, out=ex, where=finite)
    sums = np.add.reduceat(ex, starts, axis=1)
    ok = np.isfinite(m)
    out = np.full_like(m, INF)
    out[ok] = m[ok] - np.log(sums[ok])
    return out


def _check_pairing(graph: GtcGraph, post: Posteriors) -> None:
    if graph.alphabet != post.alphabet:
        raise AlphabetMismatchError("graph and posterior matrix use different alphabets")


def _fwd_matrix(c: _Compiled, emit_nll: np.ndarray, n: int) -> np.ndarray:
    T = emit_nll.shape[0]
    A = np.full((T + 2, n), _BIG)
    A[0, 0] = 0.0
    s = _Scratch(c.fwd_src.size, n - 2)
    for t in range(1, T + 1):
        np.take(A[t - 1], c.fwd_src, out=s.vals)
        s.vals += c.fwd_w
        _segment_neg_lse(s.vals, c.fwd_starts, c.fwd_seg, s, A[t, 1:n - 1])
        A[t, 1:n - 1] += emit_nll[t - 1]
    A[T + 1, n - 1] = _neg_lse(A[T, c.exit_src] + c.exit_w)
    A[A > _BIG_CUTOFF] = INF
    return A


def _bwd_matrix(c: _Compiled, emit_nll: np.ndarray, n: int) -> np.ndarray:
    T = emit_nll.shape[0]
    B = np.full((T + 2, n), _BIG)
    B[T + 1, n - 1] = 0.0
    s = _Scratch(c.bwd_dst.size, n - 2)
    for t in range(T, 0, -1):
        np.take(B[t + 1], c.bwd_dst, out=s.vals)
        s.vals += c.bwd_w
        _segment_neg_lse(s.vals, c.bwd_starts, c.bwd_seg, s, B[t, 1:n - 1])
        B[t, 1:n - 1] += emit_nll[t - 1]
    B[0, 0] = _neg_lse(c.entry_w + B[1, c.entry_dst])
    B[B > _BIG_CUTOFF] = INF
    return B


def forward(graph: GtcGraph, post: Posteriors) -> np.ndarray:
    """Alpha trellis: (T+2) x (G+2) negative-log matrix.

    alpha[t, g] for 1 <= t <= T sums every length-t prefix walk ending at
    node g; alpha[T+1, end] is the full graph cost (-log p).
    """
    _check_pairing(graph, post)
    c = _compiled(graph)
    return _fwd_matrix(c, post.neg_log()[:, c.emit_labels], graph.num_nodes)


def backward(graph: GtcGraph, post: Posteriors) -> np.ndarray:
    """Beta trellis, the suffix mirror of :func:`forward`.

    beta[t, g] includes frame t's emission at g and the exit weight;
    beta[0, start] equals the full graph cost, cross-checking alpha.
    """
    _check_pairing(graph, post)
    c = _compiled(graph)
    return _bwd_matrix(c, post.neg_log()[:, c.emit_labels], graph.num_nodes)


def analyze(graph: GtcGraph, post: Posteriors) -> Trellis:
    A = forward(graph, post)
    B = backward(graph, post)
    return Trellis(alpha=A, beta=B, log_pG=-float(A[-1, -1]))


def probability_at(alpha: np.ndarray, beta: np.ndarray, post: Posteriors,
                   graph: GtcGraph, t: int) -> float:
    """Graph probability assembled at frame t: sum_g alpha*beta/y.

    The result is the same for every t (up to rounding); trellis code
    takes it from the end node instead, so this is the cross-check.
    """
    T = post.num_frames
    n = graph.num_nodes
    if alpha.shape != (T + 2, n) or beta.shape != alpha.shape:
        raise ValueError("mismatched trellis shapes")
    if not 1 <= t <= T:
        raise ValueError(f"frame {t} outside 1..{T}")
    c = _compiled(graph)
    vals = alpha[t, 1:n - 1] + beta[t, 1:n - 1] - post.neg_log()[t - 1, c.emit_labels]
    return math.exp(-_neg_lse(vals))


def loss(graph: GtcGraph, post: Posteriors) -> float:
    """-log p(graph | posteriors); +inf when no length-T walk exists."""
    return float(forward(graph, post)[-1, -1])


def loss_and_grad(graph: GtcGraph, post: Posteriors) -> tuple[float, np.ndarray | None]:
    """Loss plus gradient w.r.t. pre-softmax logits; (inf, None) if infeasible."""
    _check_pairing(graph, post)
    c = _compiled(graph)
    T = post.num_frames
    n = graph.num_nodes
    nll = post.neg_log()
    emit_nll = nll[:, c.emit_labels]
    A = _fwd_matrix(c, emit_nll, n)
    neg_log_p = float(A[-1, -1])
    if math.isinf(neg_log_p):
        return neg_log_p, None
    B = _bwd_matrix(c, emit_nll, n)
    M = A[1:T + 1, 1:n - 1] + B[1:T + 1, 1:n - 1]
    occupancy = _segment_neg_lse_2d(np.ascontiguousarray(M[:, c.label_perm]),
                                    c.label_starts)
    S = np.full((T, len(post.alphabet)), INF)
    S[:, c.label_values] = occupancy
    grad = post.values - np.exp(-(S - nll - neg_log_p))
    return neg_log_p, grad


def gradient(graph: GtcGraph, post: Posteriors) -> np.ndarray:
    """d loss / d logits, one row per frame; rows sum to 0."""
    value, grad = loss_and_grad(graph, post)
    if grad is None:
        raise InfeasibleError(
            f"no length-{post.num_frames} walk through the graph; no finite gradient")
    return grad


def symbol_index(graph: GtcGraph) -> dict[int, tuple[int, ...]]:
    """Map symbol -> emitting nodes carrying it (the occupancy grouping)."""
    psi: dict[int, list[int]] = {}
    for g in graph.emitting_nodes():
        psi.setdefault(graph.labels[g], []).append(g)
    return {k: tuple(v) for k, v in psi.items()}


@dataclass(frozen=True)
class BatchResult:
    """Outcome for one batch item; infeasibility is an outcome, not an error."""

    loss: float
    grad: np.ndarray | None
    error: str | None = None

    @property
    def infeasible(self) -> bool:
        return self.error is None and math.isinf(self.loss)


def loss_and_grad_batch(items: Sequence[tuple[GtcGraph, np.ndarray | Logits]],
                        workers: int | None = None) -> list[BatchResult]:
    """Per-item softmax + loss + gradient; item failures do not abort the batch."""

    def run(item: tuple[GtcGraph, np.ndarray | Logits]) -> BatchResult:
        graph, logits = item
        try:
            if not isinstance(logits, Logits):
                logits = Logits(np.asarray(logits), graph.alphabet)
            value, grad = loss_and_grad(graph, logits.softmax())
            return BatchResult(value, grad)
        except (GtcError, ValueError) as exc:
            return BatchResult(math.nan, None, f"{type(exc).__name__}: {exc}")

    if workers == 1 or len(items) <= 1:
        return [run(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, items))
