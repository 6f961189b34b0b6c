"""Symbol inventory shared by graphs, posterior matrices, and decoders."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

BLANK_TOKEN = "<b>"
START_TOKEN = "<s>"
END_TOKEN = "</s>"
EPSILON = "<eps>"

RESERVED_TOKENS = (BLANK_TOKEN, START_TOKEN, END_TOKEN, EPSILON)

#: Index of the blank symbol in every alphabet.
BLANK = 0


@dataclass(frozen=True)
class Alphabet:
    """Dense, ordered symbol set with the blank fixed at index 0.

    ``symbols[0]`` is always the blank marker; the remaining entries are
    the real output tokens in file order.
    """

    symbols: tuple[str, ...]

    def __post_init__(self):
        if len(self.symbols) < 2:
            raise ValueError("alphabet needs the blank plus at least one token")
        if self.symbols[0] != BLANK_TOKEN:
            raise ValueError(f"symbol 0 must be the blank marker {BLANK_TOKEN!r}")
        for tok in self.symbols[1:]:
            if tok in RESERVED_TOKENS:
                raise ValueError(f"token {tok!r} is reserved")
            if not tok or any(c.isspace() for c in tok):
                raise ValueError(f"token {tok!r} must be non-empty and whitespace-free")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("duplicate tokens in alphabet")
        object.__setattr__(self, "_lookup", {s: i for i, s in enumerate(self.symbols)})

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "Alphabet":
        """Build an alphabet from non-blank tokens; the blank is prepended."""
        return cls((BLANK_TOKEN, *tokens))

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, token: str) -> bool:
        return token in self._lookup

    def index(self, token: str) -> int:
        try:
            return self._lookup[token]
        except KeyError:
            raise ValueError(f"token {token!r} not in alphabet") from None

    def indices(self, tokens: Sequence[str]) -> list[int]:
        return [self.index(t) for t in tokens]

    def token(self, index: int) -> str:
        return self.symbols[index]

    @property
    def non_blank(self) -> tuple[str, ...]:
        return self.symbols[1:]
