"""Exception types shared across the package."""


class GtcError(Exception):
    """Base class for errors raised by this package."""


class ParseError(GtcError):
    """A text input could not be parsed; carries file and line context."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class CyclicMachineError(GtcError):
    """An operation that requires an acyclic machine received a cyclic one."""


class NondeterministicError(GtcError):
    """Minimization requires a deterministic input machine."""


class AlphabetMismatchError(GtcError):
    """Two machines or matrices disagree about the symbol inventory."""


class EmptyLanguageError(GtcError):
    """A machine accepts no string at all."""


class InfeasibleError(GtcError):
    """The supervision graph admits no node walk of the requested length."""


class BudgetExceededError(GtcError):
    """A brute-force oracle hit its enumeration budget."""
