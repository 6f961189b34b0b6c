"""Brute-force reference implementations for the test suite.

Everything here is deliberately naive: explicit path enumeration, linear
space with compensated summation, textbook recursions. These functions
read only the data fields of graphs and machines and share none of the
optimized code paths they are used to check, so agreement between the two
sides is evidence rather than tautology. Budgets make oversized instances
fail loudly instead of silently hanging.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .alphabet import BLANK, EPSILON
from .errors import BudgetExceededError, InfeasibleError
from .graph import GtcGraph
from .wfst import Wfst


@dataclass(frozen=True)
class EnumerationBudget:
    max_paths: int = 200_000
    max_strings: int = 20_000


DEFAULT_BUDGET = EnumerationBudget()


@dataclass(frozen=True)
class OracleResult:
    """A brute-force value along with the enumeration work it cost."""

    value: float
    work: int

    def __float__(self) -> float:
        return self.value


def _posterior_values(post) -> np.ndarray:
    values = getattr(post, "values", post)
    return np.asarray(values, dtype=np.float64)


def brute_force_pG(graph: GtcGraph, post,
                   budget: EnumerationBudget = DEFAULT_BUDGET) -> OracleResult:
    """Graph probability by summing every unfolded path product."""
    y = _posterior_values(post)
    T = y.shape[0]
    succ: list[list[tuple[int, float]]] = [[] for _ in range(graph.num_nodes)]
    for e in graph.edges:
        succ[e.src].append((e.dst, e.weight))
    end = graph.end
    labels = graph.labels
    terms: list[float] = []
    steps = 0
    step_cap = budget.max_paths * (T + 2)

    def walk(node: int, t: int, prod: float) -> None:
        nonlocal steps
        steps += 1
        if steps > step_cap:
            raise BudgetExceededError(f"path enumeration exceeded {step_cap} steps")
        if t == T:
            for dst, w in succ[node]:
                if dst == end:
                    terms.append(prod * w)
                    if len(terms) > budget.max_paths:
                        raise BudgetExceededError(
                            f"more than {budget.max_paths} unfolded paths")
            return
        for dst, w in succ[node]:
            if dst != end:
                walk(dst, t + 1, prod * w * y[t, labels[dst]])

    walk(0, 0, 1.0)
    return OracleResult(math.fsum(terms), len(terms))


def brute_force_alpha(graph: GtcGraph, post,
                      budget: EnumerationBudget = DEFAULT_BUDGET) -> np.ndarray:
    """Per-cell forward sums in linear space: rows 0..T, columns = nodes."""
    y = _posterior_values(post)
    T = y.shape[0]
    succ: list[list[tuple[int, float]]] = [[] for _ in range(graph.num_nodes)]
    for e in graph.edges:
        if e.dst != graph.end:
            succ[e.src].append((e.dst, e.weight))
    cells: list[list[list[float]]] = [[[] for _ in range(graph.num_nodes)]
                                      for _ in range(T + 1)]
    cells[0][0].append(1.0)
    steps = 0
    step_cap = budget.max_paths * (T + 2)

    def walk(node: int, t: int, prod: float) -> None:
        nonlocal steps
        if t == T:
            return
        for dst, w in succ[node]:
            steps += 1
            if steps > step_cap:
                raise BudgetExceededError(f"prefix enumeration exceeded {step_cap} steps")
            p = prod * w * y[t, graph.labels[dst]]
            cells[t + 1][dst].append(p)
            walk(dst, t + 1, p)

    walk(0, 0, 1.0)
    return np.array([[math.fsum(c) for c in row] for row in cells])


def brute_force_beta(graph: GtcGraph, post,
                     budget: EnumerationBudget = DEFAULT_BUDGET) -> np.ndarray:
    """Per-cell backward sums (emission at t included), rows 1..T+1."""
    y = _posterior_values(post)
    T = y.shape[0]
    pred: list[list[tuple[int, float]]] = [[] for _ in range(graph.num_nodes)]
    for e in graph.edges:
        pred[e.dst].append((e.src, e.weight))
    cells: list[list[list[float]]] = [[[] for _ in range(graph.num_nodes)]
                                      for _ in range(T + 2)]
    cells[T + 1][graph.end].append(1.0)
    steps = 0
    step_cap = budget.max_paths * (T + 2)

    def walk(node: int, t: int, prod: float) -> None:
        nonlocal steps
        if t == 1:
            return
        for src, w in pred[node]:
            steps += 1
            if steps > step_cap:
                raise BudgetExceededError(f"suffix enumeration exceeded {step_cap} steps")
            if src == 0:
                continue
            p = prod * w * y[t - 2, graph.labels[src]]
            cells[t - 1][src].append(p)
            walk(src, t - 1, p)

    walk(graph.end, T + 1, 1.0)
    return np.array([[math.fsum(c) for c in row] for row in cells])


def _brute_force_loss(graph: GtcGraph, post_values: np.ndarray,
                      budget: EnumerationBudget) -> float:
    p = brute_force_pG(graph, post_values, budget).value
    if p <= 0.0:
        return math.inf
    return -math.log(p)


def _softmax_rows(u: np.ndarray) -> np.ndarray:
    e = np.exp(u - u.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def finite_diff_grad(graph: GtcGraph, logits, step: float = 1e-5,
                     loss_fn: Callable[[GtcGraph, np.ndarray], float] | None = None,
                     budget: EnumerationBudget = DEFAULT_BUDGET) -> np.ndarray:
    """Central differences of the loss w.r.t. each logit entry.

    ``loss_fn(graph, posterior_values)`` defaults to the enumeration-based
    loss; tests may pass the production loss to probe it directly.
    """
    if not 1e-7 <= step <= 1e-3:
        raise ValueError("step outside the trustworthy range [1e-7, 1e-3]")
    u = np.array(getattr(logits, "values", logits), dtype=np.float64)
    if loss_fn is None:
        loss_fn = lambda g, yv: _brute_force_loss(g, yv, budget)  # noqa: E731
    if math.isinf(loss_fn(graph, _softmax_rows(u))):
        raise InfeasibleError("no finite loss at the expansion point")
    grad = np.zeros_like(u)
    for t in range(u.shape[0]):
        for k in range(u.shape[1]):
            orig = u[t, k]
            u[t, k] = orig + step
            hi = loss_fn(graph, _softmax_rows(u))
            u[t, k] = orig - step
            lo = loss_fn(graph, _softmax_rows(u))
            u[t, k] = orig
            grad[t, k] = (hi - lo) / (2.0 * step)
    return grad


def reference_ctc(labels: Sequence[int], post) -> float:
    """Textbook CTC forward loss on a plain label sequence.

    Implemented on the blank-extended sequence with per-frame rescaling,
    independent of any graph machinery. Returns +inf when the sequence
    cannot be aligned to the frame count.
    """
    y = _posterior_values(post)
    T = y.shape[0]
    if len(labels) == 0:
        raise ValueError("empty label sequence")
    ext: list[int] = [BLANK]
    for l in labels:
        ext += [int(l), BLANK]
    S = len(ext)
    a = np.zeros(S)
    a[0] = y[0, ext[0]]
    if S > 1:
        a[1] = y[0, ext[1]]
    ll = 0.0
    c = a.sum()
    if c == 0.0:
        return math.inf
    a /= c
    ll += math.log(c)
    for t in range(1, T):
        nxt = a.copy()
        nxt[1:] += a[:-1]
        for s in range(2, S):
            if ext[s] != BLANK and ext[s] != ext[s - 2]:
                nxt[s] += a[s - 2]
        nxt *= y[t, ext]
        c = nxt.sum()
        if c == 0.0:
            return math.inf
        a = nxt / c
        ll += math.log(c)
    tail = a[-1] + (a[-2] if S > 1 else 0.0)
    if tail <= 0.0:
        return math.inf
    return -(ll + math.log(tail))


@dataclass(frozen=True)
class StringWeights:
    """Accepted strings with their total weights (costs), plus work done."""

    weights: Mapping[tuple[str, ...], float]
    work: int


def enumerate_strings(fst: Wfst,
                      budget: EnumerationBudget = DEFAULT_BUDGET) -> StringWeights:
    """Every accepted string of an acyclic acceptor with its summed cost.

    Path weights are accumulated in linear space with compensated
    summation and only converted to costs at the end.
    """
    if fst.start is None:
        return StringWeights({}, 0)
    out = fst.out_arcs()
    acc: dict[tuple[str, ...], list[float]] = {}
    work = 0
    # in an acyclic machine no path revisits a state
    max_depth = fst.num_states

    def walk(state: int, toks: list[str], cost: float, depth: int) -> None:
        nonlocal work
        if depth > max_depth:
            raise BudgetExceededError("path longer than the state count; cyclic input?")
        if state in fst.finals:
            work += 1
            if work > budget.max_strings:
                raise BudgetExceededError(
                    f"more than {budget.max_strings} accepting paths")
            acc.setdefault(tuple(toks), []).append(math.exp(-(cost + fst.finals[state])))
        for arc in out[state]:
            if arc.ilabel == EPSILON:
                walk(arc.dst, toks, cost + arc.weight, depth + 1)
            else:
                toks.append(arc.ilabel)
                walk(arc.dst, toks, cost + arc.weight, depth + 1)
                toks.pop()

    walk(fst.start, [], 0.0, 0)
    weights = {s: -math.log(math.fsum(v)) for s, v in acc.items()}
    return StringWeights(weights, work)


def graph_strings(graph: GtcGraph,
                  budget: EnumerationBudget = DEFAULT_BUDGET) -> set[tuple[str, ...]]:
    """Label strings a supervision graph can spell (blanks dropped).

    Walks the self-loop-free skeleton; self-loops only stretch
    alignments and never change the spelled string.
    """
    succ: list[list[int]] = [[] for _ in range(graph.num_nodes)]
    for e in graph.edges:
        if e.src != e.dst:
            succ[e.src].append(e.dst)
    strings: set[tuple[str, ...]] = set()

    def walk(node: int, toks: list[str]) -> None:
        if node == graph.end:
            strings.add(tuple(toks))
            if len(strings) > budget.max_strings:
                raise BudgetExceededError(f"more than {budget.max_strings} strings")
            return
        for dst in succ[node]:
            k = graph.labels[dst] if dst != graph.end else BLANK
            if dst != graph.end and k != BLANK:
                toks.append(graph.alphabet.token(k))
                walk(dst, toks)
                toks.pop()
            else:
                walk(dst, toks)

    walk(0, [])
    return strings


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Unit-cost edit distance, plain dynamic program."""
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i]
        for j, z in enumerate(b, start=1):
            cur.append(min(prev[j - 1] + (x != z), prev[j] + 1, cur[j - 1] + 1))
        prev = cur
    return prev[len(b)]
