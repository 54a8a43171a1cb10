"""Numerical laboratory for psi-Hilfer fractional evolution control on L2(0, pi)."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    DomainError,
    EnvelopeError,
    GateError,
    GridMismatch,
    HilferError,
    InfeasibleError,
    PoleError,
    QuadratureError,
    UnsupportedRange,
)
from .psicalc import FracOrder, PsiFunction  # noqa: E402
from .spectral import ControlFunction, EvolutionProblem, SpectralState, Trajectory, mild_solution  # noqa: E402

__all__ = [
    "ConfigError",
    "ControlFunction",
    "DomainError",
    "EnvelopeError",
    "EvolutionProblem",
    "FracOrder",
    "GateError",
    "GridMismatch",
    "HilferError",
    "InfeasibleError",
    "PoleError",
    "PsiFunction",
    "QuadratureError",
    "SpectralState",
    "Trajectory",
    "UnsupportedRange",
    "mild_solution",
]
