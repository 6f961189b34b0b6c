"""Desk-scale self-training loop over synthetic frame sequences.

The task stands in for speech: each utterance is a short random symbol
sequence rendered as per-frame one-hot features plus Gaussian noise, with
random per-symbol durations. A two-layer perceptron produces per-frame
posteriors; a seed model trained on a small labeled split decodes N-best
lists for the unlabeled split, and one model per pseudo-label condition
(1-best, confusion-network graphs, oracle selection) is retrained from
the same initialization. Reported numbers are corpus label error rates.
"""

from __future__ import annotations

import logging
import math
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .alphabet import Alphabet
from .beam import greedy_decode, nbest_from_posteriors
from .graph import GtcGraph, ctc_linear_graph, graph_density, is_feasible, unit_weights
from .loss import Posteriors, loss_and_grad, softmax
from .pipeline import (
    NBestList,
    PipelineConfig,
    build_supervision_graph,
    levenshtein,
    oracle_ler,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyntheticTask:
    """Distribution over labeled utterances; fully determined by a seed."""

    alphabet_size: int = 8
    min_len: int = 5
    max_len: int = 10
    min_dur: int = 4
    max_dur: int = 6
    noise: float = 0.4

    def __post_init__(self):
        if self.alphabet_size < 2:
            raise ValueError("alphabet_size must be >= 2")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("bad label length range")
        if not 1 <= self.min_dur <= self.max_dur:
            raise ValueError("bad duration range")
        if self.noise < 0.0:
            raise ValueError("noise must be >= 0")

    @property
    def alphabet(self) -> Alphabet:
        return Alphabet.from_tokens(string.ascii_lowercase[:self.alphabet_size])

    @property
    def feature_dim(self) -> int:
        return self.alphabet_size


@dataclass(frozen=True)
class Utterance:
    utt_id: str
    features: np.ndarray        # T' x D
    labels: tuple[int, ...]     # non-blank symbol indices

    def tokens(self, alphabet: Alphabet) -> tuple[str, ...]:
        return tuple(alphabet.token(k) for k in self.labels)


def generate_dataset(task: SyntheticTask, n_utts: int, seed: int,
                     prefix: str = "utt") -> list[Utterance]:
    """Reproducible corpus: features are noisy one-hots of the held symbol."""
    if n_utts < 1:
        raise ValueError("n_utts must be >= 1")
    rng = np.random.default_rng(seed)
    utts = []
    for u in range(n_utts):
        length = int(rng.integers(task.min_len, task.max_len + 1))
        labels = rng.integers(1, task.alphabet_size + 1, size=length)
        durations = rng.integers(task.min_dur, task.max_dur + 1, size=length)
        frame_labels = np.repeat(labels, durations)
        feats = np.zeros((len(frame_labels), task.feature_dim))
        feats[np.arange(len(frame_labels)), frame_labels - 1] = 1.0
        feats += rng.normal(0.0, task.noise, feats.shape)
        utts.append(Utterance(f"{prefix}{u:04d}", feats, tuple(int(k) for k in labels)))
    return utts


@dataclass
class FrameModel:
    """tanh MLP over single frames with a softmax output head."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    stride: int = 1

    @classmethod
    def init(cls, feature_dim: int, hidden: int, n_symbols: int, seed: int,
             stride: int = 1) -> "FrameModel":
        rng = np.random.default_rng(seed)
        return cls(
            w1=rng.normal(0.0, feature_dim ** -0.5, (feature_dim, hidden)),
            b1=np.zeros(hidden),
            w2=rng.normal(0.0, hidden ** -0.5, (hidden, n_symbols)),
            b2=np.zeros(n_symbols),
            stride=stride,
        )

    def copy(self) -> "FrameModel":
        return FrameModel(self.w1.copy(), self.b1.copy(),
                          self.w2.copy(), self.b2.copy(), self.stride)

    def _forward(self, features: np.ndarray):
        x = np.asarray(features, dtype=np.float64)[::self.stride]
        h = np.tanh(x @ self.w1 + self.b1)
        return x, h, h @ self.w2 + self.b2

    def logits(self, features: np.ndarray) -> np.ndarray:
        return self._forward(features)[2]

    def posteriors(self, features: np.ndarray) -> np.ndarray:
        return softmax(self.logits(features))

    def output_frames(self, num_input_frames: int) -> int:
        return -(-num_input_frames // self.stride)


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 0.15
    clip_norm: float = 5.0
    batch_size: int = 8
    shuffle_seed: int = 0
    decay: float = 1.0


@dataclass
class TrainStats:
    epoch_losses: list[float] = field(default_factory=list)
    dev_lers: list[float] = field(default_factory=list)
    best_epoch: int = -1
    skipped: int = 0


def train(model: FrameModel, corpus: Sequence[tuple[np.ndarray, GtcGraph]],
          epochs: int, opt: OptimizerConfig = OptimizerConfig(),
          dev: Sequence[Utterance] | None = None
          ) -> tuple[FrameModel, TrainStats]:
    """Mini-batch SGD on the graph loss; returns a trained copy.

    Infeasible (features, graph) pairs are dropped up front with a logged
    count. Gradients are averaged per batch and clipped by global norm.
    With a dev set the returned model is the epoch snapshot with the best
    dev error rate, which keeps single-epoch oscillation out of the
    reported numbers.
    """
    model = model.copy()
    stats = TrainStats()
    usable = []
    for feats, graph in corpus:
        if is_feasible(graph, model.output_frames(len(feats))):
            usable.append((feats, graph))
        else:
            stats.skipped += 1
    if stats.skipped:
        log.warning("skipped %d infeasible utterance/graph pairs", stats.skipped)
    if not usable:
        raise ValueError("no feasible training pairs")
    rng = np.random.default_rng(opt.shuffle_seed)
    params = (model.w1, model.b1, model.w2, model.b2)
    best: tuple[float, FrameModel] | None = None
    lr = opt.lr
    for epoch in range(epochs):
        order = rng.permutation(len(usable))
        losses = []
        for lo in range(0, len(order), opt.batch_size):
            batch = order[lo:lo + opt.batch_size]
            grads = tuple(np.zeros_like(p) for p in params)
            used = 0
            for i in batch:
                feats, graph = usable[i]
                x, h, u = model._forward(feats)
                value, gu = loss_and_grad(
                    graph, Posteriors(softmax(u), graph.alphabet))
                if gu is None:
                    continue
                used += 1
                losses.append(value)
                grads[2][...] += h.T @ gu
                grads[3][...] += gu.sum(axis=0)
                dh = (gu @ model.w2.T) * (1.0 - h * h)
                grads[0][...] += x.T @ dh
                grads[1][...] += dh.sum(axis=0)
            if not used:
                continue
            norm = 0.0
            for g in grads:
                g /= used
                norm += float((g * g).sum())
            norm = math.sqrt(norm)
            scale = lr * (opt.clip_norm / norm if norm > opt.clip_norm else 1.0)
            for p, g in zip(params, grads):
                p -= scale * g
        lr *= opt.decay
        stats.epoch_losses.append(float(np.mean(losses)) if losses else math.inf)
        if dev is not None:
            rate = corpus_ler(model, dev)
            stats.dev_lers.append(rate)
            if best is None or rate < best[0]:
                best = (rate, model.copy())
                stats.best_epoch = epoch
    if best is not None:
        return best[1], stats
    return model, stats


def decode_nbest(model: FrameModel, features: np.ndarray, alphabet: Alphabet,
                 n: int, beam: int, utt_id: str = "utt") -> NBestList:
    return nbest_from_posteriors(model.posteriors(features), alphabet, utt_id, n, beam)


def corpus_ler(model: FrameModel, utts: Sequence[Utterance]) -> float:
    """Greedy-decode label error rate, corpus-level."""
    dist = 0
    total = 0
    for u in utts:
        pred = greedy_decode(model.posteriors(u.features))
        dist += levenshtein(pred, u.labels)
        total += len(u.labels)
    return dist / total


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    task: SyntheticTask = SyntheticTask()
    n_labeled: int = 200
    n_unlabeled: int = 800
    n_dev: int = 100
    n_test: int = 200
    hidden: int = 64
    stride: int = 1
    lr: float = 0.15
    decay: float = 1.0
    batch_size: int = 8
    seed_epochs: int = 30
    retrain_epochs: int = 10
    nbest: int = 20
    beam: int = 24
    mu: float = 0.6
    etas: tuple[float, ...] = (0.0, 0.02, 0.05)
    # labeled copies in the retraining pool; 1 = proportional mixing
    labeled_repeats: int = 1
    workers: int = 1

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> "ExperimentConfig":
        """Build from a flat key=value dict; unknown keys are rejected."""
        task_fields = {f.name: f for f in fields(SyntheticTask)}
        own_fields = {f.name: f for f in fields(cls) if f.name != "task"}
        task_kwargs = {}
        kwargs = {}
        for key, raw in mapping.items():
            if key in task_fields:
                typ = task_fields[key].type
                task_kwargs[key] = float(raw) if typ == "float" else int(raw)
            elif key == "etas":
                kwargs["etas"] = tuple(float(x) for x in raw.replace(",", " ").split())
            elif key in own_fields:
                typ = own_fields[key].type
                kwargs[key] = float(raw) if typ == "float" else int(raw)
            else:
                raise ValueError(f"unknown config key {key!r}")
        return cls(task=SyntheticTask(**task_kwargs), **kwargs)

    def to_text(self) -> str:
        lines = []
        for f in fields(SyntheticTask):
            lines.append(f"{f.name}={getattr(self.task, f.name)}")
        for f in fields(self):
            if f.name == "task":
                continue
            value = getattr(self, f.name)
            if f.name == "etas":
                value = ",".join(str(e) for e in value)
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ConditionResult:
    name: str
    test_ler: float
    oracle_ler: float | None = None
    density: float | None = None
    skipped: int = 0


@dataclass
class Report:
    conditions: list[ConditionResult]
    table1: dict[str, float]

    def condition(self, name: str) -> ConditionResult:
        for row in self.conditions:
            if row.name == name:
                return row
        raise KeyError(name)

    def to_tsv(self) -> str:
        def fmt(x):
            return "-" if x is None else repr(round(float(x), 6))

        rows = ["condition\ttest_ler\toracle_ler\tdensity\tskipped"]
        for r in self.conditions:
            rows.append(f"{r.name}\t{fmt(r.test_ler)}\t{fmt(r.oracle_ler)}"
                        f"\t{fmt(r.density)}\t{r.skipped}")
        return "\n".join(rows) + "\n"

    def summary(self) -> str:
        lines = ["Self-training comparison (lower test LER is better)", ""]
        width = max(len(r.name) for r in self.conditions)
        for r in self.conditions:
            extra = ""
            if r.oracle_ler is not None:
                extra = f"  oracle LER {r.oracle_ler:.4f}"
            if r.density is not None:
                extra += f"  density {r.density:.3f}"
            lines.append(f"  {r.name:<{width}}  test LER {r.test_ler:.4f}{extra}")
        lines.append("")
        lines.append("Supervision quality on the unlabeled split (oracle LER):")
        for name, value in self.table1.items():
            lines.append(f"  {name:<12} {value:.4f}")
        return "\n".join(lines) + "\n"


def _map(fn: Callable, items: Iterable, workers: int) -> list:
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def self_train_experiment(config: ExperimentConfig = ExperimentConfig()) -> Report:
    """Seed training, N-best decoding, per-condition retraining, report.

    Ground-truth labels of the unlabeled split are read only for oracle
    metrics and the oracle-selection condition, never for training the
    confusion-network or 1-best conditions.
    """
    task = config.task
    alphabet = task.alphabet
    base = config.seed * 1000
    labeled = generate_dataset(task, config.n_labeled, base + 1, "lab")
    unlabeled = generate_dataset(task, config.n_unlabeled, base + 2, "unl")
    test = generate_dataset(task, config.n_test, base + 3, "tst")
    dev = (generate_dataset(task, config.n_dev, base + 6, "dev")
           if config.n_dev else None)

    init = FrameModel.init(task.feature_dim, config.hidden, len(alphabet),
                           seed=base + 4, stride=config.stride)
    opt = OptimizerConfig(lr=config.lr, batch_size=config.batch_size,
                          shuffle_seed=base + 5, decay=config.decay)
    labeled_pairs = [(u.features, ctc_linear_graph(u.labels, alphabet))
                     for u in labeled]
    seed_model, _ = train(init, labeled_pairs, config.seed_epochs, opt, dev=dev)
    report = Report([ConditionResult("seed", corpus_ler(seed_model, test))], {})

    nbests = _map(
        lambda u: decode_nbest(seed_model, u.features, alphabet,
                               config.nbest, config.beam, u.utt_id),
        unlabeled, config.workers)
    refs = [u.labels for u in unlabeled]
    ref_tokens = [u.tokens(alphabet) for u in unlabeled]
    total_ref = sum(len(r) for r in refs)

    def corpus_rate(rates: Sequence[float]) -> float:
        # per-utterance rates recombined into a corpus-level rate
        return sum(r * len(ref) for r, ref in zip(rates, refs)) / total_ref

    ler_1best = corpus_rate([oracle_ler([nb.hyps[0].tokens], rt)
                             for nb, rt in zip(nbests, ref_tokens)])
    ler_nbest = corpus_rate([oracle_ler(nb, rt)
                             for nb, rt in zip(nbests, ref_tokens)])

    def retrain(pseudo_pairs: list[tuple[np.ndarray, GtcGraph]]) -> float:
        pool = labeled_pairs * config.labeled_repeats + pseudo_pairs
        model, _ = train(init, pool, config.retrain_epochs, opt, dev=dev)
        return corpus_ler(model, test)

    def add_condition(build: Callable[[], ConditionResult]) -> None:
        # a failing condition is reported as missing, not fatal
        try:
            report.conditions.append(build())
        except (ValueError, ArithmeticError) as exc:
            log.error("condition failed: %s", exc)

    def linear_condition(name: str,
                         pick: Callable[[int], tuple[str, ...]]) -> ConditionResult:
        pairs = []
        rates = []
        skipped = 0
        for i, u in enumerate(unlabeled):
            tokens = pick(i)
            rates.append(oracle_ler([tokens], ref_tokens[i]) if tokens else 1.0)
            if not tokens:
                skipped += 1
                continue
            pairs.append((u.features, ctc_linear_graph(tokens, alphabet)))
        return ConditionResult(name, retrain(pairs), corpus_rate(rates),
                               density=None, skipped=skipped)

    add_condition(lambda: linear_condition(
        "1best", lambda i: nbests[i].hyps[0].tokens))

    graph_ler_by_eta: dict[float, float] = {}
    for eta in config.etas:
        cfg = PipelineConfig(mu=config.mu, eta=eta)
        graphs = _map(lambda nb: build_supervision_graph(nb, alphabet, cfg),
                      nbests, config.workers)
        rates = _map(lambda gr: oracle_ler(gr[0], gr[1]),
                     zip(graphs, ref_tokens), config.workers)
        graph_ler = corpus_rate(rates)
        graph_ler_by_eta[eta] = graph_ler
        density = float(np.mean([graph_density(g, len(r))
                                 for g, r in zip(graphs, refs)]))
        for weighted, name in ((False, "unit"), (True, "prob")):
            def cn_condition(weighted=weighted, name=name, eta=eta,
                             graph_ler=graph_ler, density=density):
                pairs = [(u.features, g if weighted else unit_weights(g))
                         for u, g in zip(unlabeled, graphs)]
                return ConditionResult(f"cn-{name}-eta{eta:g}", retrain(pairs),
                                       graph_ler, density)
            add_condition(cn_condition)

    def oracle_pick(i: int) -> tuple[str, ...]:
        best = min(nbests[i].hyps,
                   key=lambda h: levenshtein(h.tokens, ref_tokens[i]))
        return best.tokens

    add_condition(lambda: linear_condition("oracle-20best", oracle_pick))

    report.table1 = {
        "1best": ler_1best,
        "20best": ler_nbest,
        **{f"cn-eta{eta:g}": graph_ler_by_eta[eta] for eta in config.etas},
    }
    return report
