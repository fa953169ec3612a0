from enum import Enum
from typing import Any, Optional


class ErrorCode(str, Enum):
    # Usage / configuration (exit 2)
    USAGE_ERROR = "USAGE_ERROR"
    CONFIG_ERROR = "CONFIG_ERROR"

    # Input files (exit 3)
    PARSE_ERROR = "PARSE_ERROR"
    CHECKPOINT_ERROR = "CHECKPOINT_ERROR"

    # Numerics (exit 4)
    NUMERIC_ERROR = "NUMERIC_ERROR"
    NOT_POSITIVE_DEFINITE = "NOT_POSITIVE_DEFINITE"
    DIVERGENCE = "DIVERGENCE"

    # Protocol / shapes (exit 5)
    SHAPE_ERROR = "SHAPE_ERROR"
    MISSING_CLASS = "MISSING_CLASS"
    PROTOCOL_ERROR = "PROTOCOL_ERROR"

    IO_ERROR = "IO_ERROR"


_EXIT_CODES: dict[ErrorCode, int] = {
    ErrorCode.USAGE_ERROR: 2,
    ErrorCode.CONFIG_ERROR: 2,
    ErrorCode.PARSE_ERROR: 3,
    ErrorCode.CHECKPOINT_ERROR: 3,
    ErrorCode.NUMERIC_ERROR: 4,
    ErrorCode.NOT_POSITIVE_DEFINITE: 4,
    ErrorCode.DIVERGENCE: 4,
    ErrorCode.SHAPE_ERROR: 5,
    ErrorCode.MISSING_CLASS: 5,
    ErrorCode.PROTOCOL_ERROR: 5,
    ErrorCode.IO_ERROR: 1,
}


class VaweError(Exception):
    """Base error; every failure the CLI reports carries an ErrorCode."""

    code: ErrorCode = ErrorCode.NUMERIC_ERROR

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details


class ConfigError(VaweError):
    code = ErrorCode.CONFIG_ERROR


class ParseError(VaweError):
    code = ErrorCode.PARSE_ERROR

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        where = f"{path}:{line}: " if path is not None and line is not None else ""
        super().__init__(f"{where}{message}", path=path, line=line)
        self.line = line


class CheckpointError(VaweError):
    code = ErrorCode.CHECKPOINT_ERROR


class ShapeError(VaweError):
    code = ErrorCode.SHAPE_ERROR


class MissingClassError(VaweError):
    code = ErrorCode.MISSING_CLASS


class ProtocolError(VaweError):
    code = ErrorCode.PROTOCOL_ERROR


class NumericError(VaweError):
    code = ErrorCode.NUMERIC_ERROR


class NotPositiveDefiniteError(NumericError):
    code = ErrorCode.NOT_POSITIVE_DEFINITE


class DivergenceError(NumericError):
    code = ErrorCode.DIVERGENCE

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite loss at epoch {epoch}", epoch=epoch, loss=str(loss))
        self.epoch = epoch


class ErrorContract:
    """Standardized error payloads for the command line."""

    @staticmethod
    def exit_code(code: ErrorCode) -> int:
        return _EXIT_CODES.get(code, 1)

    @staticmethod
    def from_exception(exc: VaweError) -> dict:
        return {
            "error_code": exc.code.value,
            "message": exc.message,
            "details": {k: v for k, v in exc.details.items() if v is not None}
        }

    @staticmethod
    def usage(details: str) -> dict:
        return {
            "error_code": ErrorCode.USAGE_ERROR.value,
            "message": "Invalid command line",
            "details": {"reason": details}
        }

    @staticmethod
    def io_error(error: OSError) -> dict:
        return {
            "error_code": ErrorCode.IO_ERROR.value,
            "message": "I/O failure",
            "details": {"error": str(error)}
        }
