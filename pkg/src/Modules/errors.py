"""
Error types for the sandpile toolkit

Hierarquia de exceções usada por todos os módulos. The CLI maps
InputError to exit code 1 and ToleranceError to exit code 2.
"""

from typing import Optional


class SandlabError(Exception):
    """Base class for every error raised by the toolkit."""


class InputError(SandlabError, ValueError):
    """Invalid parameters, mismatched lengths or violated preconditions."""


class SizeGuardError(InputError):
    """A brute-force routine was asked for an instance above its size guard."""

    def __init__(self, message: str, requested: Optional[int] = None, limit: Optional[int] = None):
        super().__init__(message)
        self.requested = requested
        self.limit = limit


class ToleranceError(SandlabError, ArithmeticError):
    """A numerical routine stopped before reaching the requested tolerance."""

    def __init__(self, message: str, estimate: Optional[float] = None, achieved: Optional[float] = None):
        super().__init__(message)
        self.estimate = estimate
        self.achieved = achieved


class SingularMatrixError(ToleranceError):
    """Determinant used as a denominator is numerically zero."""


class BurningRuleError(SandlabError, AssertionError):
    """The burning edge rule asked for a candidate edge that does not exist."""


class _NotFound:
    """Sentinel returned when a bounded search exhausts its cap."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __bool__(self):
        return False

    def __repr__(self):
        return "NotFound"


NotFound = _NotFound()
