"""Text formats: graphs, posterior/logit matrices, N-best lists, alphabets.

All files are UTF-8 with LF line endings and tab separation where tabular.
Floats are serialized with repr, so a write/read round trip is exact.
Parse failures raise ParseError carrying file and line context; line 0
means the problem concerns the file as a whole.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .alphabet import BLANK_TOKEN, END_TOKEN, START_TOKEN, Alphabet
from .errors import ParseError
from .graph import END_LABEL, START_LABEL, Edge, GtcGraph
from .loss import Logits, Posteriors
from .pipeline import Hypothesis, NBestList
from .wfst import Wfst


def _fmt(x: float) -> str:
    return repr(float(x))


def write_text_atomic(path: str | Path, text: str) -> None:
    """Write via a temp file and rename, so readers never see partials."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def read_lines(path: str | Path) -> list[str]:
    try:
        return Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ParseError(path, 0, f"cannot read file: {exc.strerror or exc}") from exc


# -- supervision graphs ------------------------------------------------------

def format_graph(graph: GtcGraph) -> str:
    out = []
    for g, k in enumerate(graph.labels):
        if k == START_LABEL:
            tok = START_TOKEN
        elif k == END_LABEL:
            tok = END_TOKEN
        else:
            tok = graph.alphabet.token(k)
        out.append(f"node {g} {tok}")
    for e in graph.edges:
        out.append(f"edge {e.src} {e.dst} {_fmt(e.weight)}")
    return "\n".join(out) + "\n"


def write_graph(graph: GtcGraph, path: str | Path) -> None:
    write_text_atomic(path, format_graph(graph))


def parse_graph(lines: Iterable[str], alphabet: Alphabet,
                path: str | Path = "<graph>") -> GtcGraph:
    nodes: dict[int, int] = {}
    edges: list[Edge] = []
    for no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "node" and len(parts) == 3:
            try:
                g = int(parts[1])
            except ValueError:
                raise ParseError(path, no, f"bad node id {parts[1]!r}") from None
            if g in nodes:
                raise ParseError(path, no, f"duplicate node {g}")
            tok = parts[2]
            if tok == START_TOKEN:
                nodes[g] = START_LABEL
            elif tok == END_TOKEN:
                nodes[g] = END_LABEL
            elif tok == BLANK_TOKEN:
                nodes[g] = 0
            elif tok in alphabet:
                nodes[g] = alphabet.index(tok)
            else:
                raise ParseError(path, no, f"token {tok!r} not in alphabet")
        elif parts[0] == "edge" and len(parts) == 4:
            try:
                edges.append(Edge(int(parts[1]), int(parts[2]), float(parts[3])))
            except ValueError:
                raise ParseError(path, no, f"bad edge line {line!r}") from None
        else:
            raise ParseError(path, no, f"expected 'node <id> <label>' or "
                                       f"'edge <src> <dst> <weight>', got {line!r}")
    if not nodes:
        raise ParseError(path, 0, "no node lines")
    if sorted(nodes) != list(range(len(nodes))):
        raise ParseError(path, 0, "node ids must be dense 0..G+1")
    labels = tuple(nodes[g] for g in range(len(nodes)))
    try:
        return GtcGraph(alphabet, labels, tuple(edges))
    except ValueError as exc:
        raise ParseError(path, 0, str(exc)) from exc


def read_graph(path: str | Path, alphabet: Alphabet | None = None) -> GtcGraph:
    """Parse a graph file; without an alphabet, infer one from node tokens.

    The inferred alphabet orders tokens by first appearance, which is
    enough for token-level uses (serialization, oracle error rates) but
    need not match the training alphabet's symbol indices.
    """
    lines = read_lines(path)
    if alphabet is None:
        seen: dict[str, None] = {}
        reserved = {START_TOKEN, END_TOKEN, BLANK_TOKEN}
        for raw in lines:
            parts = raw.split()
            if len(parts) == 3 and parts[0] == "node" and parts[2] not in reserved:
                seen.setdefault(parts[2])
        alphabet = Alphabet.from_tokens(seen)
    return parse_graph(lines, alphabet, path)


# -- posterior / logit matrices ----------------------------------------------

def format_matrix(values: np.ndarray, alphabet: Alphabet) -> str:
    rows = ["\t".join(alphabet.symbols)]
    for row in np.asarray(values, dtype=np.float64):
        rows.append("\t".join(_fmt(x) for x in row))
    return "\n".join(rows) + "\n"


def write_posteriors(post: Posteriors, path: str | Path) -> None:
    write_text_atomic(path, format_matrix(post.values, post.alphabet))


def write_logits(logits: Logits, path: str | Path) -> None:
    write_text_atomic(path, format_matrix(logits.values, logits.alphabet))


def read_matrix(path: str | Path) -> tuple[np.ndarray, Alphabet]:
    lines = read_lines(path)
    if not lines or not lines[0].strip():
        raise ParseError(path, 0, "missing alphabet header row")
    try:
        alphabet = Alphabet(tuple(lines[0].rstrip("\n").split("\t")))
    except ValueError as exc:
        raise ParseError(path, 1, str(exc)) from exc
    rows = []
    for no, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        fields = raw.split("\t")
        if len(fields) != len(alphabet):
            raise ParseError(path, no,
                             f"expected {len(alphabet)} columns, got {len(fields)}")
        try:
            rows.append([float(x) for x in fields])
        except ValueError:
            raise ParseError(path, no, "non-numeric matrix entry") from None
    if not rows:
        raise ParseError(path, 0, "matrix has no frame rows")
    return np.array(rows, dtype=np.float64), alphabet


def read_posteriors(path: str | Path) -> Posteriors:
    values, alphabet = read_matrix(path)
    try:
        return Posteriors(values, alphabet)
    except ValueError as exc:
        raise ParseError(path, 0, str(exc)) from exc


def read_logits(path: str | Path) -> Logits:
    values, alphabet = read_matrix(path)
    try:
        return Logits(values, alphabet)
    except ValueError as exc:
        raise ParseError(path, 0, str(exc)) from exc


# -- N-best lists -------------------------------------------------------------

def format_nbest(lists: Iterable[NBestList]) -> str:
    out = []
    for nb in lists:
        for h in nb.hyps:
            out.append(f"{nb.utt_id}\t{_fmt(h.score)}\t{' '.join(h.tokens)}")
    return "\n".join(out) + "\n"


def write_nbest(lists: Iterable[NBestList], path: str | Path) -> None:
    write_text_atomic(path, format_nbest(lists))


def read_nbest(path: str | Path, alphabet: Alphabet | None = None) -> list[NBestList]:
    """Grouped by utterance id in order of first appearance.

    With an alphabet, every token is validated and unknown ones are
    reported with their line number.
    """
    grouped: dict[str, list[Hypothesis]] = {}
    order: list[str] = []
    for no, raw in enumerate(read_lines(path), start=1):
        if not raw.strip():
            continue
        fields = raw.split("\t")
        if len(fields) != 3:
            raise ParseError(path, no, "expected <utt_id>\\t<score>\\t<tokens>")
        utt, score_s, tok_s = fields
        try:
            score = float(score_s)
        except ValueError:
            raise ParseError(path, no, f"bad score {score_s!r}") from None
        tokens = tuple(tok_s.split())
        if alphabet is not None:
            for tok in tokens:
                if tok not in alphabet or tok == alphabet.token(0):
                    raise ParseError(path, no, f"token {tok!r} not in alphabet")
        if utt not in grouped:
            grouped[utt] = []
            order.append(utt)
        grouped[utt].append(Hypothesis(tokens, score))
    if not order:
        raise ParseError(path, 0, "no hypotheses")
    return [NBestList(utt, tuple(grouped[utt])) for utt in order]


# -- alphabets ----------------------------------------------------------------

def write_alphabet(alphabet: Alphabet, path: str | Path) -> None:
    write_text_atomic(path, "\n".join(alphabet.non_blank) + "\n")


def read_alphabet(path: str | Path) -> Alphabet:
    tokens = [line.strip() for line in read_lines(path) if line.strip()]
    try:
        return Alphabet.from_tokens(tokens)
    except ValueError as exc:
        raise ParseError(path, 0, str(exc)) from exc


# -- weighted acceptors --------------------------------------------------------

def format_fst(machine: Wfst) -> str:
    """Serialize an acceptor: `start`, `arc`, and `final` records.

    Arc labels are written verbatim, with `<eps>` naming the empty label.
    Transducers are not representable; arcs must carry a single label.
    """
    if machine.start is None:
        raise ValueError("machine has no start state")
    if not machine.is_acceptor():
        raise ValueError("only acceptors serialize; arc labels differ")
    lines = [f"start {machine.start}"]
    for a in machine.arcs:
        lines.append(f"arc {a.src} {a.dst} {a.ilabel} {_fmt(a.weight)}")
    for state in sorted(machine.finals):
        lines.append(f"final {state} {_fmt(machine.finals[state])}")
    return "\n".join(lines) + "\n"


def parse_fst(lines: Sequence[str], path: str | Path = "<fst>") -> Wfst:
    machine = Wfst()
    saw_start = False

    def state(no: int, field: str) -> int:
        try:
            s = int(field)
        except ValueError:
            raise ParseError(path, no, f"bad state id {field!r}") from None
        if s < 0:
            raise ParseError(path, no, f"negative state id {s}")
        if s >= machine.num_states:
            machine.add_states(s + 1 - machine.num_states)
        return s

    def weight(no: int, field: str) -> float:
        try:
            return float(field)
        except ValueError:
            raise ParseError(path, no, f"bad weight {field!r}") from None

    for no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        kind = fields[0]
        if kind == "start":
            if len(fields) != 2:
                raise ParseError(path, no, "expected `start <state>`")
            machine.set_start(state(no, fields[1]))
            saw_start = True
        elif kind == "arc":
            if len(fields) != 5:
                raise ParseError(path, no, "expected `arc <src> <dst> <label> <weight>`")
            src = state(no, fields[1])
            dst = state(no, fields[2])
            machine.add_arc(src, dst, fields[3], weight(no, fields[4]))
        elif kind == "final":
            if len(fields) != 3:
                raise ParseError(path, no, "expected `final <state> <weight>`")
            machine.set_final(state(no, fields[1]), weight(no, fields[2]))
        else:
            raise ParseError(path, no, f"unknown record {kind!r}")
    if not saw_start:
        raise ParseError(path, 0, "missing start record")
    if not machine.finals:
        raise ParseError(path, 0, "missing final record")
    return machine


def write_fst(machine: Wfst, path: str | Path) -> None:
    write_text_atomic(path, format_fst(machine))


def read_fst(path: str | Path) -> Wfst:
    return parse_fst(read_lines(path), path)


# -- reference transcripts and configs ----------------------------------------

def read_refs(path: str | Path) -> list[tuple[str, tuple[str, ...]]]:
    """Reference file: one `<utt_id>\\t<token token ...>` per line."""
    refs = []
    for no, raw in enumerate(read_lines(path), start=1):
        if not raw.strip():
            continue
        fields = raw.split("\t")
        if len(fields) != 2:
            raise ParseError(path, no, "expected <utt_id>\\t<tokens>")
        refs.append((fields[0], tuple(fields[1].split())))
    if not refs:
        raise ParseError(path, 0, "no references")
    return refs


def write_refs(refs: Iterable[tuple[str, Sequence[str]]], path: str | Path) -> None:
    write_text_atomic(path, "".join(f"{u}\t{' '.join(t)}\n" for u, t in refs))


def read_config(path: str | Path) -> dict[str, str]:
    """Flat key=value file; '#' starts a comment line."""
    out: dict[str, str] = {}
    for no, raw in enumerate(read_lines(path), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(path, no, f"expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ParseError(path, no, "empty key")
        if key in out:
            raise ParseError(path, no, f"duplicate key {key!r}")
        out[key] = value.strip()
    return out
