# backend/errors.py - Exception hierarchy shared by every module
"""
Errors raised by the lab. Each class carries the exit code the CLI returns
when the error escapes a subcommand.
"""


class HorseshoeLabError(Exception):
    """Base class for all lab errors."""

    exit_code = 1


class ValidationError(HorseshoeLabError, ValueError):
    """Invalid parameters or inputs, detected before any compute."""

    exit_code = 2


class InvalidIndexError(ValidationError):
    """Zero wavenumber or index outside the cutoff."""


class AliasingError(ValidationError):
    """Transform grid too small for an alias-free round trip."""


class ForcingValidationError(ValidationError):
    """Noise amplitudes violate the low/high mode non-degeneracy assumptions."""

    def __init__(self, message, key=None):
        self.key = key
        super().__init__(message)


class ConfigError(ValidationError):
    """Bad config key or value. Always names the key and the constraint."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class NumericalInstabilityError(HorseshoeLabError):
    """Non-finite or exploding spectral coefficients."""

    exit_code = 3

    def __init__(self, message, step=None, mode=None, partial=None):
        self.step = step
        self.mode = mode
        self.partial = partial if partial is not None else []
        super().__init__(message)


class DegenerateFrameError(HorseshoeLabError):
    """Rank-deficient tangent frame during QR renormalization."""

    exit_code = 3

    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message)


class SumRuleError(HorseshoeLabError):
    """Lyapunov exponents of a unimodular cocycle do not sum to zero."""

    exit_code = 3


class BudgetExhaustedError(HorseshoeLabError):
    """Quadtree search ran out of cell-orbit budget."""

    exit_code = 4
