#!/usr/bin/env python3
"""Regenerate the frontend bridge's loss fixtures from the primary library.

Each case directory holds a supervision graph, an input logit matrix, and
the expected loss/gradient produced by the batch evaluation op. The bridge
test suite asserts bit-identical doubles after a text round trip, so the
values here are serialized with repr (shortest round-trip form).

Usage: python3 scripts/make_bridge_fixtures.py [OUT_DIR]
Default OUT_DIR is frontend/test/fixtures relative to the repo root.
"""

from __future__ import annotations

import math
import sys
from pathlib import Path

import numpy as np

from gtc import io as gio
from gtc.alphabet import Alphabet
from gtc.graph import END_LABEL, START_LABEL, Edge, GtcGraph, ctc_linear_graph
from gtc.loss import Logits, loss_and_grad_batch
from gtc.pipeline import Hypothesis, NBestList, PipelineConfig, build_supervision_graph

ABC = Alphabet.from_tokens(["a", "b", "c"])


def single_emitting_graph() -> GtcGraph:
    labels = (START_LABEL, ABC.index("a"), END_LABEL)
    return GtcGraph(ABC, labels, (Edge(0, 1, 1.0), Edge(1, 1, 1.0), Edge(1, 2, 1.0)))


def cn_graph(eta: float) -> GtcGraph:
    nbest = NBestList("utt0", (
        Hypothesis(("a", "b"), -0.2),
        Hypothesis(("a", "c"), -1.1),
        Hypothesis(("b",), -2.3),
    ))
    return build_supervision_graph(nbest, ABC, PipelineConfig(mu=0.6, eta=eta))


def cases():
    rng = np.random.default_rng(20240815)

    def logits(t: int) -> np.ndarray:
        return rng.normal(0.0, 1.5, (t, len(ABC)))

    yield "single-node", single_emitting_graph(), logits(1)
    yield "linear-ab", ctc_linear_graph(("a", "b"), ABC), logits(6)
    yield "repeat-aa", ctc_linear_graph(("a", "a"), ABC), logits(6)
    yield "cn-unpruned", cn_graph(0.0), logits(8)
    yield "cn-pruned", cn_graph(0.2), logits(8)
    yield "infeasible", ctc_linear_graph(("a", "b", "c"), ABC), logits(2)
    yield "gradcheck", ctc_linear_graph(("a",), ABC), logits(3)


def main() -> int:
    root = Path(__file__).resolve().parent.parent
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else root / "frontend/test/fixtures"
    out.mkdir(parents=True, exist_ok=True)
    gio.write_alphabet(ABC, out / "alphabet.txt")

    named = list(cases())
    results = loss_and_grad_batch([(g, Logits(u, ABC)) for _, g, u in named])
    manifest = []
    for (name, graph, logit_vals), res in zip(named, results):
        case = out / "cases" / name
        case.mkdir(parents=True, exist_ok=True)
        gio.write_graph(graph, case / "graph.gtc")
        gio.write_logits(Logits(logit_vals, ABC), case / "logits.tsv")
        assert res.error is None, f"{name}: {res.error}"
        (case / "expected_loss.txt").write_text(f"{res.loss!r}\n")
        grad = res.grad if res.grad is not None else np.zeros_like(logit_vals)
        gio.write_text_atomic(case / "expected_grad.tsv",
                              gio.format_matrix(grad, ABC))
        manifest.append(name)
        flag = "infeasible" if math.isinf(res.loss) else f"loss={res.loss!r}"
        print(f"{name}: T={logit_vals.shape[0]} {flag}")
    (out / "cases.txt").write_text("\n".join(manifest) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
