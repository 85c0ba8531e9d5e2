"""Entanglement generation by random two-qubit gates: simulation, Markov chain and analysis."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CapacityError,
    ConvergenceError,
    DomainError,
    EntgenError,
    InsufficientDataError,
    StructuralError,
    UnsupportedGateError,
    ValidationError,
)

__all__ = [
    "__version__",
    "CapacityError",
    "ConvergenceError",
    "DomainError",
    "EntgenError",
    "InsufficientDataError",
    "StructuralError",
    "UnsupportedGateError",
    "ValidationError",
]
