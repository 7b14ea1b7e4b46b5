"""Map exceptions to CLI exit codes and render the error payload."""

from enum import IntEnum
import sys
from typing import TextIO

from loguru import logger

from src.core.exceptions import (
    AppError,
    ConflictError,
    ErrorDetails,
    InternalError,
    NotFoundError,
    ValidationError,
    VerdictFailure,
)
from src.schemas.errors import ErrorDetail, ErrorResponse


class ExitCode(IntEnum):
    OK = 0
    VERDICT_FAILURE = 1
    SOLVER_FAILURE = 2
    CONFIG_ERROR = 3


def _error_payload(
    code: str,
    message: str,
    exit_code: ExitCode,
    details: ErrorDetails | None = None,
) -> ErrorResponse:
    """Build consistent error payload."""
    return ErrorResponse(
        error=ErrorDetail(code=code, message=message, details=details or {}),
        exit_code=int(exit_code),
    )


def exit_code_for(exc: BaseException) -> ExitCode:
    """Exit code of an exception raised by a command."""
    match exc:
        case VerdictFailure():
            return ExitCode.VERDICT_FAILURE
        case ValidationError() | ConflictError() | NotFoundError():
            return ExitCode.CONFIG_ERROR
        case InternalError():
            return ExitCode.SOLVER_FAILURE
        case _:
            return ExitCode.SOLVER_FAILURE


def handle_error(exc: BaseException, stream: TextIO | None = None) -> ExitCode:
    """Log ``exc``, write its JSON payload to ``stream`` and return the code.

    ``stream`` defaults to stderr.
    """
    code = exit_code_for(exc)
    if isinstance(exc, VerdictFailure):
        logger.warning(f"VerdictFailure: {exc.message}")
    elif isinstance(exc, AppError):
        logger.error(f"{type(exc).__name__}: {exc.message}")
    else:
        logger.exception(f"Unhandled exception: {exc}")

    error = (
        exc
        if isinstance(exc, AppError)
        else InternalError(details={"type": type(exc).__name__})
    )
    payload = _error_payload(error.code, error.message, code, error.details)
    out = stream if stream is not None else sys.stderr
    out.write(payload.model_dump_json() + "\n")
    return code
