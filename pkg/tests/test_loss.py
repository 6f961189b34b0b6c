"""Forward/backward trellises, the graph loss, and its gradient."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gtc.alphabet import Alphabet
from gtc.errors import AlphabetMismatchError, InfeasibleError
from gtc.graph import END_LABEL, START_LABEL, Edge, GtcGraph, ctc_linear_graph
from gtc.loss import (
    BatchResult,
    Logits,
    Posteriors,
    analyze,
    backward,
    forward,
    gradient,
    loss,
    loss_and_grad,
    loss_and_grad_batch,
    probability_at,
    softmax,
    symbol_index,
)
from gtc.oracles import (
    brute_force_alpha,
    brute_force_beta,
    brute_force_pG,
    finite_diff_grad,
    reference_ctc,
)

from conftest import ABC, random_graph, random_logits, random_posteriors, small_graph_and_T

A_IDX = ABC.index("a")
B_IDX = ABC.index("b")


def single_node_graph(entry_w: float = 1.0, exit_w: float = 1.0,
                      self_loop: bool = False) -> GtcGraph:
    edges = [Edge(0, 1, entry_w), Edge(1, 2, exit_w)]
    if self_loop:
        edges.append(Edge(1, 1, 1.0))
    return GtcGraph(ABC, (START_LABEL, A_IDX, END_LABEL), tuple(edges))


def one_frame(y_blank: float, y_a: float, y_b: float, y_c: float) -> Posteriors:
    return Posteriors(np.array([[y_blank, y_a, y_b, y_c]]), ABC)


def rel_log_close(cost: float, prob: float, tol: float = 1e-10) -> bool:
    """Compare a neg-log cost against a linear-space oracle probability."""
    if prob <= 0.0:
        return math.isinf(cost)
    want = -math.log(prob)
    return abs(cost - want) <= tol * max(1.0, abs(want))


# -- forced single-node examples ---------------------------------------------------

def test_forward_single_node():
    post = one_frame(0.1, 0.7, 0.1, 0.1)
    A = forward(single_node_graph(), post)
    assert A.shape == (3, 3)
    assert A[0, 0] == 0.0
    assert A[1, 1] == pytest.approx(-math.log(0.7), abs=1e-12)
    assert A[2, 2] == pytest.approx(-math.log(0.7), abs=1e-12)


def test_forward_scales_with_entry_weight():
    post = one_frame(0.1, 0.7, 0.1, 0.1)
    A = forward(single_node_graph(entry_w=0.5), post)
    assert A[1, 1] == pytest.approx(-math.log(0.35), abs=1e-12)


def test_backward_single_node():
    post = one_frame(0.1, 0.7, 0.1, 0.1)
    B = backward(single_node_graph(), post)
    assert B[2, 2] == 0.0
    assert B[1, 1] == pytest.approx(-math.log(0.7), abs=1e-12)


def test_backward_scales_with_exit_weight():
    post = one_frame(0.1, 0.7, 0.1, 0.1)
    B = backward(single_node_graph(exit_w=0.5), post)
    assert B[1, 1] == pytest.approx(-math.log(0.35), abs=1e-12)


def test_probability_at_single_node():
    post = one_frame(0.1, 0.7, 0.1, 0.1)
    g = single_node_graph()
    tr = analyze(g, post)
    assert probability_at(tr.alpha, tr.beta, post, g, 1) == pytest.approx(0.7, abs=1e-12)


def test_loss_single_node():
    post = one_frame(0.1, 0.7, 0.1, 0.1)
    assert loss(single_node_graph(), post) == pytest.approx(0.3566749439387324,
                                                            abs=1e-12)


def test_loss_parallel_paths_sums_probability():
    # two one-node branches labeled a and b, unit weights: p = y_a + y_b
    g = GtcGraph(ABC, (START_LABEL, A_IDX, B_IDX, END_LABEL),
                 (Edge(0, 1, 1.0), Edge(0, 2, 1.0), Edge(1, 3, 1.0), Edge(2, 3, 1.0)))
    post = one_frame(0.1, 0.3, 0.5, 0.1)
    assert loss(g, post) == pytest.approx(-math.log(0.8), abs=1e-12)


def test_gradient_single_node_is_posterior_minus_onehot():
    post = one_frame(0.1, 0.7, 0.1, 0.1)
    grad = gradient(single_node_graph(), post)
    onehot = np.zeros(4)
    onehot[A_IDX] = 1.0
    np.testing.assert_allclose(grad[0], post.values[0] - onehot, atol=1e-12)


def test_gradient_of_absent_symbols_is_posterior(rng):
    # graph only supports a; b, c, blank never enter the occupancy sum
    g = single_node_graph(self_loop=True)
    post = Posteriors(random_posteriors(rng, 4, 4), ABC)
    grad = gradient(g, post)
    for k in range(4):
        if k == A_IDX:
            continue
        np.testing.assert_allclose(grad[:, k], post.values[:, k], atol=1e-12)


def test_gradient_of_unique_supported_symbol_is_posterior_minus_one(rng):
    # every path emits a at every frame, so occupancy/y collapses to p
    g = single_node_graph(self_loop=True)
    post = Posteriors(random_posteriors(rng, 5, 4), ABC)
    grad = gradient(g, post)
    np.testing.assert_allclose(grad[:, A_IDX], post.values[:, A_IDX] - 1.0,
                               atol=1e-10)
    assert (grad[:, A_IDX] <= 0.0).all()


# -- brute-force equivalence -------------------------------------------------------

def test_forward_matches_enumeration(rng):
    for _ in range(30):
        g, T = small_graph_and_T(rng, max_emitting=6, max_T=8)
        post = Posteriors(random_posteriors(rng, T, 4), ABC)
        A = forward(g, post)
        want = brute_force_alpha(g, post)
        for t in range(T + 1):
            for node in range(g.num_nodes):
                assert rel_log_close(A[t, node], want[t, node]), (t, node)


def test_backward_matches_enumeration(rng):
    for _ in range(30):
        g, T = small_graph_and_T(rng, max_emitting=6, max_T=8)
        post = Posteriors(random_posteriors(rng, T, 4), ABC)
        B = backward(g, post)
        want = brute_force_beta(g, post)
        for t in range(1, T + 2):
            for node in range(g.num_nodes):
                assert rel_log_close(B[t, node], want[t, node]), (t, node)


def test_loss_matches_path_sum(rng):
    for _ in range(50):
        g, T = small_graph_and_T(rng)
        post = Posteriors(random_posteriors(rng, T, 4), ABC)
        want = brute_force_pG(g, post).value
        got = math.exp(-loss(g, post))
        assert got == pytest.approx(want, rel=1e-9)


def test_alpha_and_beta_totals_agree(rng):
    for _ in range(20):
        g, T = small_graph_and_T(rng)
        post = Posteriors(random_posteriors(rng, T, 4), ABC)
        A = forward(g, post)
        B = backward(g, post)
        assert A[-1, -1] == pytest.approx(B[0, 0], rel=1e-12)


# -- Eq. 4 style assembly ----------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**9))
def test_probability_constant_over_frames(seed):
    rng = np.random.default_rng(seed)
    g, T = small_graph_and_T(rng, max_emitting=8, max_T=10)
    post = Posteriors(random_posteriors(rng, T, 4), ABC)
    tr = analyze(g, post)
    values = [probability_at(tr.alpha, tr.beta, post, g, t)
              for t in range(1, T + 1)]
    want = math.exp(tr.log_pG)
    for v in values:
        if want == 0.0:
            assert v == 0.0
        else:
            assert abs(math.log(v) - tr.log_pG) <= 1e-10 * max(1.0, abs(tr.log_pG))


def test_probability_at_validates_inputs(rng):
    g, T = small_graph_and_T(rng)
    post = Posteriors(random_posteriors(rng, T, 4), ABC)
    tr = analyze(g, post)
    with pytest.raises(ValueError):
        probability_at(tr.alpha[:-1], tr.beta, post, g, 1)
    with pytest.raises(ValueError):
        probability_at(tr.alpha, tr.beta, post, g, 0)
    with pytest.raises(ValueError):
        probability_at(tr.alpha, tr.beta, post, g, T + 1)


# -- CTC reduction -----------------------------------------------------------------

def test_linear_graph_reduces_to_ctc(rng):
    for _ in range(50):
        L = int(rng.integers(1, 5))
        labels = [int(rng.integers(1, 4)) for _ in range(L)]
        T = int(rng.integers(2 * L + 1, 2 * L + 6))
        post = Posteriors(random_posteriors(rng, T, 4), ABC)
        g = ctc_linear_graph(labels, ABC)
        assert loss(g, post) == pytest.approx(reference_ctc(labels, post),
                                              rel=1e-9)


def test_linear_graph_gradient_matches_ctc_differences(rng):
    # central differences of the independent CTC loss w.r.t. logits
    def ctc_fd(labels, u, step=1e-5):
        grad = np.zeros_like(u)
        for t in range(u.shape[0]):
            for k in range(u.shape[1]):
                orig = u[t, k]
                u[t, k] = orig + step
                hi = reference_ctc(labels, softmax(u))
                u[t, k] = orig - step
                lo = reference_ctc(labels, softmax(u))
                u[t, k] = orig
                grad[t, k] = (hi - lo) / (2 * step)
        return grad

    for _ in range(5):
        labels = [int(rng.integers(1, 4)) for _ in range(3)]
        u = random_logits(rng, 8, 4)
        g = ctc_linear_graph(labels, ABC)
        _, grad = loss_and_grad(g, Posteriors(softmax(u), ABC))
        fd = ctc_fd(labels, u.copy())
        err = np.abs(grad - fd) / np.maximum.reduce(
            [np.abs(grad), np.abs(fd), np.full_like(fd, 1e-8)])
        assert err.max() <= 1e-5


# -- gradient properties -----------------------------------------------------------

def test_gradient_matches_finite_differences(rng):
    for _ in range(15):
        g, T = small_graph_and_T(rng, max_emitting=5, max_T=7)
        u = random_logits(rng, T, 4)
        post = Posteriors(softmax(u), ABC)
        value, grad = loss_and_grad(g, post)
        fd = finite_diff_grad(g, u, step=1e-5,
                              loss_fn=lambda gg, yv: loss(gg, Posteriors(yv, ABC)))
        err = np.abs(grad - fd) / np.maximum.reduce(
            [np.abs(grad), np.abs(fd), np.full_like(fd, 1e-8)])
        assert err.max() <= 1e-5


def test_gradient_vs_enumeration_differences(rng):
    # same check against the path-enumeration loss, fully independent code
    g, T = small_graph_and_T(rng, max_emitting=4, max_T=5, max_walks=500)
    u = random_logits(rng, T, 4)
    _, grad = loss_and_grad(g, Posteriors(softmax(u), ABC))
    fd = finite_diff_grad(g, u, step=1e-5)
    err = np.abs(grad - fd) / np.maximum.reduce(
        [np.abs(grad), np.abs(fd), np.full_like(fd, 1e-8)])
    assert err.max() <= 1e-5


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**9))
def test_gradient_rows_sum_to_zero(seed):
    rng = np.random.default_rng(seed)
    g, T = small_graph_and_T(rng)
    post = Posteriors(random_posteriors(rng, T, 4), ABC)
    grad = gradient(g, post)
    np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-8)


def test_weight_scaling_shifts_loss_by_path_length(rng):
    # every complete length-T unfolding uses exactly T+1 edges, so scaling
    # all weights by c shifts the loss by -(T+1) ln c and leaves the
    # normalized path distribution, hence the gradient, unchanged
    for c in (0.5, 0.8):
        g, T = small_graph_and_T(rng)
        scaled = GtcGraph(g.alphabet, g.labels,
                          tuple(Edge(e.src, e.dst, c * e.weight) for e in g.edges))
        post = Posteriors(random_posteriors(rng, T, 4), ABC)
        base, base_grad = loss_and_grad(g, post)
        shifted, shifted_grad = loss_and_grad(scaled, post)
        assert shifted == pytest.approx(base - (T + 1) * math.log(c), rel=1e-9)
        np.testing.assert_allclose(shifted_grad, base_grad, atol=1e-9)


# -- infeasibility -----------------------------------------------------------------

def test_too_few_frames_is_infeasible():
    g = ctc_linear_graph(("a", "b", "c"), ABC)
    post = Posteriors(np.full((2, 4), 0.25), ABC)
    assert loss(g, post) == math.inf
    value, grad = loss_and_grad(g, post)
    assert math.isinf(value) and grad is None
    with pytest.raises(InfeasibleError):
        gradient(g, post)


def test_infeasible_probability_is_zero():
    g = ctc_linear_graph(("a", "b", "c"), ABC)
    post = Posteriors(np.full((2, 4), 0.25), ABC)
    tr = analyze(g, post)
    assert probability_at(tr.alpha, tr.beta, post, g, 1) == 0.0


# -- symbol index ------------------------------------------------------------------

def test_symbol_index_partitions_emitting_nodes(rng):
    g = random_graph(rng)
    psi = symbol_index(g)
    seen = sorted(n for nodes in psi.values() for n in nodes)
    assert seen == list(g.emitting_nodes())
    for k, nodes in psi.items():
        assert all(g.labels[n] == k for n in nodes)


# -- input validation --------------------------------------------------------------

def test_posterior_rows_must_sum_to_one():
    with pytest.raises(ValueError):
        Posteriors(np.array([[0.5, 0.2, 0.2, 0.2]]), ABC)
    with pytest.raises(ValueError):
        Posteriors(np.array([[1.2, -0.2, 0.0, 0.0]]), ABC)


def test_logits_must_be_finite():
    with pytest.raises(ValueError):
        Logits(np.array([[0.0, math.inf, 0.0, 0.0]]), ABC)


def test_alphabet_mismatch_rejected(rng):
    other = Alphabet.from_tokens(["a", "b"])
    g = ctc_linear_graph(("a",), other)
    post = Posteriors(random_posteriors(rng, 3, 4), ABC)
    with pytest.raises(AlphabetMismatchError):
        loss(g, post)


# -- batch mode --------------------------------------------------------------------

def batch_items(rng, k):
    items = []
    for _ in range(k):
        g, T = small_graph_and_T(rng, max_emitting=5, max_T=8)
        items.append((g, random_logits(rng, T, 4)))
    return items


def test_batch_of_one_equals_single_call(rng):
    [(g, u)] = batch_items(rng, 1)
    [res] = loss_and_grad_batch([(g, u)])
    value, grad = loss_and_grad(g, Logits(u, ABC).softmax())
    assert res.loss == value and res.error is None
    np.testing.assert_array_equal(res.grad, grad)


def test_batch_of_identical_items_is_constant(rng):
    [(g, u)] = batch_items(rng, 1)
    results = loss_and_grad_batch([(g, u)] * 5, workers=3)
    assert len({r.loss for r in results}) == 1
    for r in results[1:]:
        np.testing.assert_array_equal(r.grad, results[0].grad)


def test_batch_matches_sequential_and_is_worker_independent(rng):
    items = batch_items(rng, 16)
    sequential = loss_and_grad_batch(items, workers=1)
    for workers in (2, 5):
        parallel = loss_and_grad_batch(items, workers=workers)
        for a, b in zip(sequential, parallel):
            assert a.loss == b.loss and a.error == b.error
            np.testing.assert_array_equal(a.grad, b.grad)


def test_batch_reports_per_item_outcomes(rng):
    good_g, T = small_graph_and_T(rng)
    good_u = random_logits(rng, T, 4)
    short = ctc_linear_graph(("a", "b", "c"), ABC)  # needs at least 3 frames
    wrong = ctc_linear_graph(("a",), Alphabet.from_tokens(["a", "b"]))
    items = [(good_g, good_u), (short, random_logits(rng, 2, 4)),
             (wrong, random_logits(rng, 3, 4))]
    results = loss_and_grad_batch(items, workers=2)
    assert results[0].error is None and not results[0].infeasible
    assert results[1].infeasible and results[1].grad is None
    assert results[2].error is not None and "alphabet" in results[2].error.lower()
