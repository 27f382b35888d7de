"""Exception taxonomy shared across the package.

Everything derives from :class:`FockdivError` so callers can catch the
package's failures with a single clause.  Divergence routines never raise on
singular inputs (infinite values are returned as ``math.inf`` inside typed
results); these exceptions cover genuine misuse and backend breakage.
"""


class FockdivError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(FockdivError, ValueError):
    """A matrix or index had an incompatible or non-positive dimension."""


class InvalidParameterError(FockdivError, ValueError):
    """A channel or algorithm parameter was outside its documented range."""


class InvalidDistributionError(FockdivError, ValueError):
    """A probability vector had negative entries or did not sum to one."""


class InvalidInputError(FockdivError, ValueError):
    """A matrix argument violated a precondition (e.g. not positive definite)."""


class SupportViolationError(FockdivError, ArithmeticError):
    """supp(x) is not contained in supp(y) where the operation requires it.

    Raised by matrix-function internals; divergence entry points catch it and
    convert to an infinite-divergence result.
    """


class ModelConstructionError(FockdivError, ValueError):
    """A conic program referenced undeclared variables or mismatched blocks."""


class BackendError(FockdivError, RuntimeError):
    """The solver backend is missing or failed in a non-recoverable way."""


class ConfigError(FockdivError, ValueError):
    """A run configuration file was unreadable or failed validation."""
