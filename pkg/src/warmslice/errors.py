from __future__ import annotations


class WarmsliceError(Exception):
    """Base class for every error raised by the laboratory."""


class InvalidInputError(WarmsliceError, ValueError):
    """Raised when a pure function receives arguments outside its domain."""


class NotFoundError(WarmsliceError, LookupError):
    pass


class AlreadyExistsError(WarmsliceError, FileExistsError):
    pass


class CalibrationError(WarmsliceError, ValueError):
    """Raised when a resize latency table breaks its invariants."""


class CalibrationFormatError(CalibrationError):
    def __init__(self, message: str, *, line_number: int) -> None:
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class CapacityError(WarmsliceError):
    pass


class ProtocolError(WarmsliceError, RuntimeError):
    """Raised when the simulator feeds a policy an impossible transition."""


class NotFinishedError(WarmsliceError):
    pass


class EmptyInputError(WarmsliceError, ValueError):
    pass


class WatchTimeoutError(WarmsliceError, TimeoutError):
    def __init__(self, message: str, *, step_index: int | None = None) -> None:
        if step_index is not None:
            message = f"step {step_index}: {message}"
        super().__init__(message)
        self.step_index = step_index
