"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of a function."""


class NumericError(ArithmeticError):
    """An iterative numerical routine failed to converge."""


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


class StructuralError(ValueError):
    """A tree encoding is malformed."""


class SamplingError(RuntimeError):
    """Rejection sampling ran out of attempts."""

    def __init__(self, message, acceptance_rate=None):
        super().__init__(message)
        self.acceptance_rate = acceptance_rate


class TreeOverflow(Exception):
    """Total progeny of a sampled tree would exceed the caller's cap."""

    def __init__(self, cap):
        super().__init__(f"total progeny exceeds cap={cap}")
        self.cap = cap


class CalibrationError(RuntimeError):
    """Calibration diagnostics exceeded their thresholds."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
