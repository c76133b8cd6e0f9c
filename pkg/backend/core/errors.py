from typing import Any, Dict, Optional


class FissionLabError(Exception):
    """Base error; `exit_code` is what the CLI returns when this escapes."""
    exit_code = 1


# --- Families (CLI exit codes 2 / 3 / 4) ---

class ConfigError(FissionLabError):
    exit_code = 2


class DataError(FissionLabError):
    exit_code = 3


class NumericError(FissionLabError):
    exit_code = 4


# --- Configuration / parameter errors ---

class ParameterError(ConfigError, ValueError):
    pass


class RangeError(ConfigError, ValueError):
    pass


# --- Data errors ---

class LabelError(DataError, ValueError):
    pass


class NegativeCountError(DataError, ValueError):
    pass


class NegativeEntryError(NegativeCountError):
    pass


class InsufficientDataError(DataError, ValueError):
    pass


class DegenerateDataError(DataError, ValueError):
    pass


class ZeroVarianceError(DataError, ValueError):
    pass


class LengthMismatchError(DataError, ValueError):
    pass


class DimMismatchError(DataError, ValueError):
    pass


class DuplicateIdError(DataError, ValueError):
    def __init__(self, duplicate_id: str, kind: str = "id"):
        self.duplicate_id = duplicate_id
        super().__init__(f"duplicate {kind} '{duplicate_id}'")


class ParseError(DataError, ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


# --- Numeric errors ---

class DecompositionError(NumericError):
    pass


class DomainError(NumericError, ValueError):
    pass


class ConvergenceError(NumericError):
    pass


# --- Pipeline wrapper ---

class PipelineError(FissionLabError):
    """A replicate stage failed; keeps the stage name, grid coordinates and cause."""

    def __init__(self, stage: str, point: Dict[str, Any], cause: BaseException):
        self.stage = stage
        self.point = point
        self.cause = cause
        super().__init__(f"stage '{stage}' failed at {point}: {type(cause).__name__}: {cause}")

    @property
    def exit_code(self) -> int:  # type: ignore[override]
        return getattr(self.cause, "exit_code", 1)
