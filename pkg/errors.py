from typing import Optional


class HyperTeaError(Exception):
    """Base class for every error raised by the library."""


class ShapeError(HyperTeaError, ValueError):
    pass


class NonFiniteError(HyperTeaError, ArithmeticError):
    """A NaN/Inf showed up in a forward value or a reverse-pass gradient."""

    def __init__(self, message: str, op: Optional[str] = None):
        super().__init__(message)
        self.op = op


class GradCheckError(HyperTeaError):
    pass


class ConfigError(HyperTeaError, ValueError):
    pass


class DataError(HyperTeaError):
    pass


class InfeasibleSceneError(DataError):
    pass


class CheckpointError(HyperTeaError):
    pass
