"""Exception types raised across the package."""


class DivacsimError(Exception):
    """Base class for all package errors."""


class ConfigError(DivacsimError, ValueError):
    """Invalid parameters or run configuration."""


class NumericalError(DivacsimError, ArithmeticError):
    """A numerical routine failed or produced an invalid result."""


class DiagonalizationError(NumericalError):
    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class DegeneracyError(NumericalError):
    """Eigenstate selection is ambiguous at an exact (or near-exact) degeneracy."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class OutOfRangeError(NumericalError):
    pass


class FitError(NumericalError):
    def __init__(self, message, residual_norm=None):
        super().__init__(message)
        self.residual_norm = residual_norm


class AddressingError(DivacsimError, ValueError):
    """A drive frequency does not select a unique transition."""


class StepSizeError(NumericalError):
    pass


class DSLError(DivacsimError, ValueError):
    """Pulse-sequence syntax or resolution error with source location."""

    def __init__(self, message, line=None, col=None):
        self.msg = message
        self.line = line
        self.col = col
        loc = f"line {line}, col {col}: " if line is not None else ""
        super().__init__(loc + message)
