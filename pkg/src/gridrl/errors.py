"""Shared exception types."""


class ShapeError(ValueError):
    """Array shape or dimension mismatch."""


class NumericError(ArithmeticError):
    """Non-finite values where finite ones are required."""


class StateError(RuntimeError):
    """Operation called in the wrong order (e.g. backward without forward)."""


class DataError(ValueError):
    """Bad or insufficient input data (parsing, imputation, windowing, sampling)."""


class TrainingError(RuntimeError):
    """Training diverged or could not proceed."""
