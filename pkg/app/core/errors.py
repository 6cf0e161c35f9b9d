from __future__ import annotations

from typing import Any


class PDError(Exception):
    """Base class for every failure raised by the library."""


class InvalidDistributionError(PDError, ValueError):
    pass


class DivergenceUndefinedError(PDError, ValueError):
    pass


class GuardExceededError(PDError):
    def __init__(self, joint_size: int, guard: int) -> None:
        super().__init__(f"joint space has {joint_size} entries, oracle guard is {guard}")
        self.joint_size = joint_size
        self.guard = guard


class DegenerateConstraintsError(PDError):
    pass


class StepCollapseError(PDError):
    pass


class EstimatorUnavailableError(PDError):
    pass


class UtilityEvaluationError(PDError):
    pass


class PartialBlockError(PDError):
    def __init__(self, message: str, completed: Any = None) -> None:
        super().__init__(message)
        self.completed = completed


class OutOfOrderBlockError(PDError):
    pass


class NoCoverageError(PDError):
    pass


class EmptyTruncationError(PDError):
    pass


class InvalidParameterError(PDError, ValueError):
    pass


class BetaDecreaseError(PDError, ValueError):
    pass


class SymmetryError(PDError, ValueError):
    pass


class UnknownGeneratorError(PDError, KeyError):
    pass


class UnknownAlgorithmError(PDError, KeyError):
    pass


class RunAbortedError(PDError):
    def __init__(self, message: str, trace: list | None = None) -> None:
        super().__init__(message)
        self.trace = trace or []
