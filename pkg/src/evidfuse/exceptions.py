"""Exception hierarchy shared across the package.

The classes split along the three boundaries the CLI reports distinctly:
contract/shape violations, tensor-file problems, and numerical failures.
"""


class EvidfuseError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(EvidfuseError, ValueError):
    """A contract violation: bad shape, dtype, range, or flag combination."""


class TensorIOError(EvidfuseError, IOError):
    """Base class for tensor-file read/write failures."""


class TensorFormatError(TensorIOError):
    """The file is not a well-formed tensor file (bad magic or header)."""


class TensorEncodingError(TensorIOError):
    """The file is well-formed but uses an encoding this package does not
    accept (wrong dtype, Fortran order, unsupported version)."""


class TensorCorruptionError(TensorIOError):
    """Header and payload disagree (truncated or oversized payload)."""


class NumericalError(EvidfuseError, ArithmeticError):
    """A numerical failure: non-finite values or degenerate mass totals."""


class NonFiniteError(NumericalError):
    """NaN or Inf encountered where finite values are required."""


class TotalConflictError(NumericalError):
    """Two belief assignments are in total conflict: the combined mass is
    (numerically) zero so no normalized result exists."""


class TrainingDivergedError(NumericalError):
    """The training loss became non-finite."""
