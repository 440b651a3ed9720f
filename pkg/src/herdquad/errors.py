"""Exception hierarchy shared across the package."""


class HerdquadError(Exception):
    """Base class for all package errors."""


class InputError(HerdquadError, ValueError):
    """Malformed argument: wrong shape, dimension mismatch, bad value."""


class ConfigError(InputError):
    """Invalid experiment configuration."""


class CapacityError(InputError):
    """The candidate pool has no unselected candidates left."""


class NumericalError(HerdquadError, ArithmeticError):
    """A computed quantity violates a mathematical invariant."""


class NotPositiveDefinite(NumericalError):
    """A Cholesky pivot or Schur complement was not strictly positive.

    Usually signals duplicate sample locations or a jitter that is too small.
    """
