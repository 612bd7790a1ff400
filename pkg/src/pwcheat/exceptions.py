"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ValidationError -> 1,
NumericalError -> 2, OSError -> 3.
"""


class ValidationError(ValueError):
    """Input violates a documented precondition or invariant."""


class UnderdeterminedError(ValidationError):
    """Too few data samples for the requested number of unknowns."""


class NumericalError(RuntimeError):
    """A computation failed numerically (NaN state, decomposition failure)."""


class TailDominationError(NumericalError):
    """Truncated-tail bound of a numerical Laplace transform is not negligible."""
