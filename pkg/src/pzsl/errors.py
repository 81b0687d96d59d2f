"""Exception hierarchy shared across the package.

Validation-style failures (bad shapes, bad parameters, malformed files,
inconsistent data) exit the CLI with code 1; numeric failures (NaN/Inf in a
forward or backward pass, divergence) exit with code 2.
"""


class PzslError(Exception):
    """Base class for all package errors."""


class ShapeError(PzslError):
    """Tensor dimensions do not satisfy an operation's contract."""


class ParameterError(PzslError):
    """A hyperparameter or argument is outside its valid range."""


class ValidationError(PzslError):
    """Input data fails a structural precondition (empty names, bad config)."""


class FormatError(PzslError):
    """A binary or manifest file is malformed; message names the byte offset."""


class DataError(PzslError):
    """Dataset-level inconsistency (empty candidate set, unknown label)."""


class NumericError(PzslError):
    """Non-finite values or numeric divergence during computation."""
