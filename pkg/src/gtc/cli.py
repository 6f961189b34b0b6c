"""Command-line surface: graph building, loss/gradient evaluation, oracle
label error rates, and the self-training demo.

Exit codes: 0 success, 1 usage, 2 I/O or parse failure, 3 infeasible or
numeric failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import io as gio
from .beam import nbest_from_posteriors
from .errors import GtcError, InfeasibleError, ParseError
from .graph import is_feasible, unit_weights
from .loss import Logits, Posteriors, loss_and_grad, softmax
from .oracles import finite_diff_grad
from .pipeline import PipelineConfig, build_supervision_graph, oracle_ler
from .toy import ExperimentConfig, self_train_experiment

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERIC = 3

INFEASIBLE_MESSAGE = "infeasible: no length-T path"


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract reserves 2 for I/O."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _require_files(*paths: str) -> None:
    # validate inputs before any work starts
    for p in paths:
        if not os.path.isfile(p):
            raise ParseError(p, 0, "no such file")


def cmd_build_graph(args) -> int:
    _require_files(args.nbest, args.alphabet)
    alphabet = gio.read_alphabet(args.alphabet)
    nbests = gio.read_nbest(args.nbest, alphabet)
    config = PipelineConfig(mu=args.mu, eta=args.eta)
    os.makedirs(args.out, exist_ok=True)

    def build(nbest):
        graph = build_supervision_graph(nbest, alphabet, config)
        if args.unit_weights:
            graph = unit_weights(graph)
        gio.write_graph(graph, os.path.join(args.out, f"{nbest.utt_id}.gtc"))
        # no reference at build time, so density is per 1-best token
        denom = max(len(nbest.best.tokens), 1)
        return nbest.utt_id, graph.num_non_blank / denom

    if args.workers > 1 and len(nbests) > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(build, nbests))
    else:
        rows = [build(nb) for nb in nbests]
    for utt_id, density in rows:
        print(f"{utt_id}\t{density!r}")
    return EXIT_OK


def _read_matrix_pair(graph_path: str, matrix_path: str, as_logits: bool):
    """Matrix header fixes the alphabet; the graph is parsed against it."""
    if as_logits:
        logits = gio.read_logits(matrix_path)
        post = logits.softmax()
    else:
        post = gio.read_posteriors(matrix_path)
        logits = None
    graph = gio.read_graph(graph_path, post.alphabet)
    return graph, post, logits


def _loss_item(graph_path: str, matrix_path: str, as_logits: bool,
               grad_out: str | None) -> float:
    graph, post, _ = _read_matrix_pair(graph_path, matrix_path, as_logits)
    value, grad = loss_and_grad(graph, post)
    if grad_out:
        # infeasible items get an all-zero gradient, mirroring batch results
        if grad is None:
            grad = np.zeros_like(post.values)
        gio.write_text_atomic(grad_out, gio.format_matrix(grad, post.alphabet))
    return value


def cmd_loss(args) -> int:
    if args.batch:
        return _loss_batch(args)
    if args.graph is None:
        raise ParseError("<args>", 0, "--graph is required without --batch")
    matrix = args.logits if args.logits else args.posteriors
    if not matrix:
        raise ParseError("<args>", 0, "one of --posteriors/--logits is required")
    _require_files(args.graph, matrix)
    value = _loss_item(args.graph, matrix, bool(args.logits), args.grad)
    if math.isinf(value):
        print(INFEASIBLE_MESSAGE, file=sys.stderr)
        return EXIT_NUMERIC
    print(repr(value))
    return EXIT_OK


def _loss_batch(args) -> int:
    """Manifest lines: id, graph, matrix, grad-out-or-dash (tab-separated).

    Relative manifest paths resolve against the manifest's directory.
    Per-item failures are reported on their output line; the batch
    itself still succeeds.
    """
    _require_files(args.batch)
    base = os.path.dirname(os.path.abspath(args.batch))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    for line_no, raw in enumerate(gio.read_lines(args.batch), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ParseError(args.batch, line_no, "expected 4 tab-separated fields")
        item_id, graph_path, matrix_path, grad_out = parts
        try:
            value = _loss_item(resolve(graph_path), resolve(matrix_path),
                               bool(args.logits),
                               None if grad_out == "-" else resolve(grad_out))
        except (GtcError, ValueError, OSError) as exc:
            print(f"{item_id}\terror\t{exc}")
            continue
        print(f"{item_id}\t{value!r}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    _require_files(args.graph, args.logits)
    graph, post, logits = _read_matrix_pair(args.graph, args.logits, True)
    if not is_feasible(graph, post.num_frames):
        print(INFEASIBLE_MESSAGE, file=sys.stderr)
        return EXIT_NUMERIC

    def production_loss(g, p):
        # softmax output may underflow to 0; clamp before validation
        value, _ = loss_and_grad(g, Posteriors(np.maximum(p, 1e-300), g.alphabet))
        return value

    _, analytic = loss_and_grad(graph, post)
    numeric = finite_diff_grad(graph, logits.values, step=args.step,
                               loss_fn=production_loss)
    denom = np.maximum(np.maximum(np.abs(numeric), np.abs(analytic)), 1e-8)
    err = float(np.max(np.abs(analytic - numeric) / denom))
    print(repr(err))
    if err > args.tolerance:
        print(f"gradcheck failed: {err!r} > {args.tolerance!r}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_oracle_ler(args) -> int:
    _require_files(args.ref)
    refs = dict(gio.read_refs(args.ref))
    if not refs:
        raise ParseError(args.ref, 0, "no reference lines")
    if args.graph:
        _require_files(args.graph)
        graph = gio.read_graph(args.graph)
        ref_tokens = next(iter(refs.values()))
        print(repr(oracle_ler(graph, ref_tokens)))
        return EXIT_OK
    if args.graph_dir:
        # corpus rate over <utt>.gtc files, weighted by reference length
        dist = 0.0
        total = 0
        for utt_id, ref_tokens in refs.items():
            path = os.path.join(args.graph_dir, f"{utt_id}.gtc")
            _require_files(path)
            dist += oracle_ler(gio.read_graph(path), ref_tokens) * len(ref_tokens)
            total += len(ref_tokens)
        print(repr(dist / total))
        return EXIT_OK
    _require_files(args.nbest)
    nbests = gio.read_nbest(args.nbest)
    dist = 0.0
    total = 0
    for nbest in nbests:
        if nbest.utt_id not in refs:
            raise ParseError(args.ref, 0, f"missing reference for {nbest.utt_id!r}")
        ref = refs[nbest.utt_id]
        dist += oracle_ler(nbest, ref) * len(ref)
        total += len(ref)
    print(repr(dist / total))
    return EXIT_OK


def cmd_decode(args) -> int:
    """Manifest lines: utt_id, matrix path (tab-separated)."""
    _require_files(args.manifest)
    base = os.path.dirname(os.path.abspath(args.manifest))
    items = []
    for line_no, raw in enumerate(gio.read_lines(args.manifest), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(args.manifest, line_no,
                             "expected 2 tab-separated fields")
        utt_id, matrix_path = parts
        if not os.path.isabs(matrix_path):
            matrix_path = os.path.join(base, matrix_path)
        items.append((utt_id, matrix_path))
    if not items:
        raise ParseError(args.manifest, 0, "no decode items")

    def decode(item):
        utt_id, matrix_path = item
        _require_files(matrix_path)
        if args.logits:
            post = gio.read_logits(matrix_path).softmax()
        else:
            post = gio.read_posteriors(matrix_path)
        return nbest_from_posteriors(post.values, post.alphabet, utt_id,
                                     args.n, args.beam)

    if args.workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            nbests = list(pool.map(decode, items))
    else:
        nbests = [decode(item) for item in items]
    gio.write_nbest(nbests, args.out)
    return EXIT_OK


def cmd_demo(args) -> int:
    _require_files(args.config)
    mapping = gio.read_config(args.config)
    config = ExperimentConfig.from_mapping(mapping)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.workers is not None:
        config = replace(config, workers=args.workers)
    report = self_train_experiment(config)
    os.makedirs(args.out, exist_ok=True)
    gio.write_text_atomic(os.path.join(args.out, "report.tsv"), report.to_tsv())
    gio.write_text_atomic(os.path.join(args.out, "summary.txt"), report.summary())
    print(report.summary(), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gtc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build-graph", help="N-best lists to supervision graphs")
    p.add_argument("--nbest", required=True)
    p.add_argument("--alphabet", required=True)
    p.add_argument("--mu", type=float, default=0.6)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--unit-weights", action="store_true")
    p.add_argument("--out", required=True, help="output directory for .gtc files")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("loss", help="graph loss, optionally with gradient")
    p.add_argument("--graph")
    p.add_argument("--posteriors")
    # a path in single mode; bare flag marks batch matrices as logits
    p.add_argument("--logits", nargs="?", const="yes")
    p.add_argument("--grad", help="write gradient TSV here")
    p.add_argument("--batch", help="manifest of id/graph/matrix/grad-out lines")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("gradcheck", help="analytic vs finite-difference gradient")
    p.add_argument("--graph", required=True)
    p.add_argument("--logits", required=True)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("oracle-ler", help="best achievable LER of a graph or N-best")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--graph")
    group.add_argument("--graph-dir", help="directory of <utt_id>.gtc files")
    group.add_argument("--nbest")
    p.add_argument("--ref", required=True)
    p.set_defaults(func=cmd_oracle_ler)

    p = sub.add_parser("decode", help="posterior/logit matrices to N-best lists")
    p.add_argument("--manifest", required=True,
                   help="utt_id and matrix path per line, tab-separated")
    p.add_argument("--logits", action="store_true")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--beam", type=int, default=24)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("demo", help="run the self-training experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleError:
        print(INFEASIBLE_MESSAGE, file=sys.stderr)
        return EXIT_NUMERIC
    except ParseError as exc:
        print(f"gtc: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"gtc: {exc}", file=sys.stderr)
        return EXIT_IO
    except (GtcError, ValueError) as exc:
        print(f"gtc: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
