"""Exception types raised across the package."""


class BGFDError(Exception):
    """Base class for all package errors."""


class ShapeError(BGFDError, ValueError):
    pass


class ParameterError(BGFDError, ValueError):
    pass


class UsageError(BGFDError, RuntimeError):
    pass


class NumericError(BGFDError, ArithmeticError):
    pass


class ValidationError(BGFDError, ValueError):
    pass


class IntegrityError(BGFDError, IOError):
    pass


class ConfigError(BGFDError, ValueError):
    pass


class DivergenceError(BGFDError, RuntimeError):
    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"non-finite loss at iteration {iteration}")


class AblationRunError(BGFDError, RuntimeError):
    """A training run inside the ablation matrix failed."""

    def __init__(self, row: str, seed: int, cause: Exception):
        self.row, self.seed, self.cause = row, seed, cause
        super().__init__(f"ablation row {row!r} (seed {seed}) failed: {cause}")
