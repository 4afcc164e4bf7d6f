"""Exception types shared across the package."""

from __future__ import annotations

__all__ = [
    "QCloakError",
    "ConfigStructureError",
    "DegenerateInputError",
    "NumericalDegeneracyError",
    "QuadratureError",
]


class QCloakError(Exception):
    """Base class for package errors."""


class ConfigStructureError(QCloakError, ValueError):
    """Config document is structurally wrong (missing/unknown key, bad type)."""


class DegenerateInputError(QCloakError, ValueError):
    """Physically degenerate input, e.g. a vanishing wavenumber at an interface."""


class NumericalDegeneracyError(QCloakError, RuntimeError):
    """Matching system too ill-conditioned to trust."""

    def __init__(self, message: str, condition: float = float("nan")):
        super().__init__(message)
        self.condition = condition


class QuadratureError(QCloakError, RuntimeError):
    """Quadrature failed to reach the requested tolerance."""

    def __init__(self, message: str, achieved: float = float("nan")):
        super().__init__(message)
        self.achieved = achieved
