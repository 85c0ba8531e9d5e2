"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: usage/domain problems exit with 2,
capacity problems with 3 and numerical failures with 4.
"""


class EntgenError(Exception):
    """Base class for all package errors."""

    exit_code = 4


class DomainError(EntgenError, ValueError):
    """An argument lies outside the operation's domain."""

    exit_code = 2


class ValidationError(EntgenError, ValueError):
    """An input failed a numerical validity check (e.g. not unitary)."""

    exit_code = 2


class UnsupportedGateError(DomainError):
    """The gate has no Markov-chain description (not Clifford, not u4)."""


class CapacityError(EntgenError, MemoryError):
    """The requested size exceeds the configured memory ceiling."""

    exit_code = 3


class StructuralError(EntgenError):
    """A spectrum does not have the structure the chain guarantees."""


class ConvergenceError(EntgenError):
    """An iterative solver or fitter did not converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InsufficientDataError(EntgenError, ValueError):
    """Too few usable points for a fit."""
