"""Error payload written to stderr by the command line."""

from pydantic import BaseModel


class ErrorDetail(BaseModel):
    """Standard error detail structure."""

    code: str
    message: str
    details: dict[
        str,
        str
        | int
        | float
        | bool
        | list[str]
        | list[float]
        | list[dict[str, str | int | float]]
        | None,
    ] = {}


class ErrorResponse(BaseModel):
    """Standard error response wrapper."""

    error: ErrorDetail
    exit_code: int
