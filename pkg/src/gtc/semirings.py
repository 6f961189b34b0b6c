"""Weight algebras for the automaton algorithms.

Weights everywhere are nonnegative costs, i.e. negative natural-log
probabilities. ``times`` is therefore plain addition in both semirings
and the ``zero`` element is ``inf`` (probability zero). The log
semiring's ``plus`` sums probabilities; the tropical one keeps the best
path.
"""

from __future__ import annotations

import math
from typing import Iterable

INF = math.inf


class Semiring:
    """Operations of a commutative-plus semiring on float costs."""

    zero: float = INF
    one: float = 0.0

    def plus(self, a: float, b: float) -> float:
        raise NotImplementedError

    def times(self, a: float, b: float) -> float:
        if a == INF or b == INF:
            return INF
        return a + b

    def divide(self, a: float, b: float) -> float:
        """Inverse of ``times``: a ⊘ b. Undefined for b == zero."""
        if b == INF:
            raise ZeroDivisionError("division by semiring zero")
        if a == INF:
            return INF
        return a - b

    def sum(self, values: Iterable[float]) -> float:
        total = self.zero
        for v in values:
            total = self.plus(total, v)
        return total


class LogSemiring(Semiring):
    """Probability addition on neg-log weights: a ⊕ b = -log(e^-a + e^-b).

    Evaluated as min + log1p(exp(-|a-b|)) so large costs do not underflow.
    """

    def plus(self, a: float, b: float) -> float:
        if a == INF:
            return b
        if b == INF:
            return a
        lo, hi = (a, b) if a <= b else (b, a)
        return lo - math.log1p(math.exp(lo - hi))


class TropicalSemiring(Semiring):
    """Best-path algebra: ⊕ = min."""

    def plus(self, a: float, b: float) -> float:
        return a if a <= b else b


LOG = LogSemiring()
TROPICAL = TropicalSemiring()
