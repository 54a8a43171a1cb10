"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class HilferError(Exception):
    """Base class; ``operation`` names the routine that failed."""

    def __init__(self, message: str, operation: str | None = None):
        super().__init__(message)
        self.operation = operation


class PoleError(HilferError, ValueError):
    pass


class UnsupportedRange(HilferError, ValueError):
    pass


class DomainError(HilferError, ValueError):
    pass


class GateError(HilferError, ValueError):
    """Raised when the fractional order leaves the square-integrable regime."""


class QuadratureError(HilferError, RuntimeError):
    pass


class EnvelopeError(HilferError, ValueError):
    pass


class GridMismatch(HilferError, ValueError):
    pass


class ConfigError(HilferError, ValueError):
    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        super().__init__(message, operation="load_config")
        self.field = field
        self.line = line


class InfeasibleError(HilferError):
    """Simulation and projection did not reconcile within the round limit."""
