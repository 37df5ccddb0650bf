"""Exception types raised across the package."""


class BDSDEError(Exception):
    """Base class for all errors raised by bdsde_lab."""


class NonConvergent(BDSDEError, ArithmeticError):
    """An improper integral or truncation search failed to converge."""


class NonPositiveEpsilon(BDSDEError, ValueError):
    pass


class ShapeMismatch(BDSDEError, ValueError):
    pass


class SingularRegression(BDSDEError, ArithmeticError):
    pass


class NoConvergence(BDSDEError, RuntimeError):
    """Picard iteration did not reach its tolerance, or diverged.

    The partial diagnostics (``picard_deltas``) are attached so callers can
    report how far the iteration got.
    """

    def __init__(self, message, picard_deltas=None):
        super().__init__(message)
        self.picard_deltas = list(picard_deltas or [])


class ParseError(BDSDEError, ValueError):
    def __init__(self, message, line=1, column=1):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class IllegalVariable(ParseError):
    pass


class ValidationError(BDSDEError, ValueError):
    """Configuration failed validation; ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
