"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: format errors -> 3, numerical
failures -> 4 (usage errors are argparse's native exit 2).
"""


class GdnError(Exception):
    """Base class for all package errors."""


class InvalidPartition(GdnError, ValueError):
    """Subspace partition does not cover the index set disjointly."""


class InvariantViolation(GdnError, ValueError):
    """Parameter values violate a documented invariant."""


class FormatError(GdnError, ValueError):
    """Malformed model/dataset/image stream."""


class NumericalError(GdnError, ArithmeticError):
    """Numerical failure (non-finite values, singular systems, divergence)."""


class NonFiniteError(NumericalError):
    """A non-finite intermediate was produced; carries sample/component info."""

    def __init__(self, message, sample=None, component=None):
        super().__init__(message)
        self.sample = sample
        self.component = component


class InversionError(NumericalError):
    """Fixed-point inversion did not converge; carries per-sample residuals."""

    def __init__(self, message, indices=None, residuals=None):
        super().__init__(message)
        self.indices = indices
        self.residuals = residuals
