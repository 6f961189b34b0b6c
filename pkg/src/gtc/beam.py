"""CTC prefix beam search: N-best collapsed sequences with summed scores.

Each beam entry tracks the probability of its prefix split by whether the
last emitted frame was blank, which is what makes the repeat/extend
bookkeeping exact. With a beam at least as wide as the number of live
prefixes the search is exhaustive, which the tests exploit.
"""

from __future__ import annotations

import math

import numpy as np

from .alphabet import BLANK, Alphabet
from .pipeline import Hypothesis, NBestList

_NEG_INF = -math.inf


def _logadd(a: float, b: float) -> float:
    if a == _NEG_INF:
        return b
    if b == _NEG_INF:
        return a
    hi, lo = (a, b) if a >= b else (b, a)
    return hi + math.log1p(math.exp(lo - hi))


def prefix_beam_search(values: np.ndarray, beam: int) -> list[tuple[tuple[int, ...], float]]:
    """All surviving prefixes with log of total collapsed probability.

    ``values`` is a T x |alphabet| posterior matrix (blank at column 0).
    Returned prefixes are symbol-index tuples, best first; ties break
    lexicographically so results are reproducible.
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    logy = np.log(np.maximum(np.asarray(values, dtype=np.float64), 1e-300))
    T, K = logy.shape
    # prefix -> [p_blank, p_nonblank]
    beams: dict[tuple[int, ...], list[float]] = {(): [0.0, _NEG_INF]}
    for t in range(T):
        row = logy[t]
        nxt: dict[tuple[int, ...], list[float]] = {}

        def entry(prefix: tuple[int, ...]) -> list[float]:
            e = nxt.get(prefix)
            if e is None:
                e = [_NEG_INF, _NEG_INF]
                nxt[prefix] = e
            return e

        for prefix, (pb, pnb) in beams.items():
            total = _logadd(pb, pnb)
            e = entry(prefix)
            e[0] = _logadd(e[0], total + row[BLANK])
            last = prefix[-1] if prefix else None
            for k in range(1, K):
                score = row[k]
                if k == last:
                    # same symbol again extends the run; a fresh copy of
                    # the symbol needs the blank-terminated mass only
                    e[1] = _logadd(e[1], pnb + score)
                    grown = entry(prefix + (k,))
                    grown[1] = _logadd(grown[1], pb + score)
                else:
                    grown = entry(prefix + (k,))
                    grown[1] = _logadd(grown[1], total + score)
        # zero-probability placeholders (e.g. a repeat extension fed only
        # by blank-terminated mass that does not exist yet) never rank
        ranked = sorted(
            (kv for kv in nxt.items() if _logadd(kv[1][0], kv[1][1]) > _NEG_INF),
            key=lambda kv: (-_logadd(kv[1][0], kv[1][1]), kv[0]))
        beams = dict(ranked[:beam])
    final = [(prefix, _logadd(pb, pnb)) for prefix, (pb, pnb) in beams.items()]
    final.sort(key=lambda kv: (-kv[1], kv[0]))
    return final


def nbest_from_posteriors(values: np.ndarray, alphabet: Alphabet, utt_id: str,
                          n: int, beam: int) -> NBestList:
    """Top-n distinct collapsed sequences as a scored hypothesis list."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if beam < n:
        raise ValueError("beam must be >= n")
    ranked = prefix_beam_search(values, beam)
    hyps = [Hypothesis(tuple(alphabet.token(k) for k in prefix), score)
            for prefix, score in ranked[:n]]
    return NBestList(utt_id, tuple(hyps))


def greedy_decode(values: np.ndarray) -> tuple[int, ...]:
    """Best-path collapse: frame argmax, dedupe runs, drop blanks."""
    best = np.argmax(values, axis=1)
    out: list[int] = []
    prev = -1
    for k in best:
        if k != prev and k != BLANK:
            out.append(int(k))
        prev = int(k)
    return tuple(out)
