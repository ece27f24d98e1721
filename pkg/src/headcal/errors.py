"""Exception hierarchy shared by all headcal modules."""

from __future__ import annotations


class HeadCalError(Exception):
    """Base class for every error raised by headcal."""


class FrameMismatchError(HeadCalError, ValueError):
    pass


class InvalidTransformError(HeadCalError, ValueError):
    pass


class NonPositiveDepthError(HeadCalError, ValueError):
    pass


class OutOfBoundsError(HeadCalError, ValueError):
    pass


class InvalidDepthError(HeadCalError, ValueError):
    pass


class MissingLandmarkError(HeadCalError, KeyError):
    def __init__(self, landmark_id: str):
        super().__init__(landmark_id)
        self.landmark_id = landmark_id

    def __str__(self) -> str:
        return f"missing landmark {self.landmark_id!r}"


class NonPositiveMeasurementError(HeadCalError, ValueError):
    pass


class PnPError(HeadCalError):
    pass


class InsufficientPointsError(PnPError, ValueError):
    pass


class DegenerateConfigurationError(PnPError, ValueError):
    pass


class DivergenceError(PnPError, ArithmeticError):
    pass


class CalibrationError(HeadCalError):
    """A pipeline stage failed; ``stage`` names it and ``__cause__`` holds the original error."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


class InfeasibleRangeError(HeadCalError, ValueError):
    pass


class EmptyGroupError(HeadCalError, ValueError):
    pass


class ValidationError(HeadCalError, ValueError):
    """A file violated its schema or a domain invariant."""

    def __init__(self, file: str, field: str, rule: str):
        super().__init__(f"{file}: {field}: {rule}")
        self.file = file
        self.field = field
        self.rule = rule


class ParseError(HeadCalError, ValueError):
    """Malformed JSON/CSV input, with a position when one is known."""

    def __init__(self, file: str, message: str, line: int | None = None, column: int | None = None):
        where = file
        if line is not None:
            where += f":{line}"
            if column is not None:
                where += f":{column}"
        super().__init__(f"{where}: {message}")
        self.file = file
        self.line = line
        self.column = column


class UnknownParticipantError(HeadCalError, ValueError):
    pass
