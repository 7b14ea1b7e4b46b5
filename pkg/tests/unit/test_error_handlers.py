"""Unit tests for exit codes and the stderr error payload."""

import io
import json

import pytest

from src.core.error_handlers import ExitCode, exit_code_for, handle_error
from src.core.exceptions import (
    ConfigError,
    ConflictError,
    HomotopyStallError,
    InternalError,
    MeshError,
    NotFoundError,
    VerdictFailure,
)


class TestExitCodeFor:
    """Tests for exit_code_for."""

    @pytest.mark.parametrize(
        ("exc", "expected"),
        [
            (VerdictFailure(), ExitCode.VERDICT_FAILURE),
            (HomotopyStallError(), ExitCode.SOLVER_FAILURE),
            (ConfigError(), ExitCode.CONFIG_ERROR),
            (MeshError(), ExitCode.CONFIG_ERROR),
            (ConflictError(), ExitCode.CONFIG_ERROR),
            (NotFoundError(), ExitCode.CONFIG_ERROR),
            (InternalError(), ExitCode.SOLVER_FAILURE),
            (ZeroDivisionError(), ExitCode.SOLVER_FAILURE),
        ],
    )
    def test_mapping(self, exc, expected):
        """Test the documented exit code of each error family."""
        assert exit_code_for(exc) is expected


class TestHandleError:
    """Tests for handle_error."""

    def test_app_error_payload(self):
        """Test that code, message and details reach stderr."""
        stream = io.StringIO()
        violation = {
            "key": "problem.p",
            "value": "5",
            "constraint": "p must lie in (2,4)",
        }
        exc = ConfigError(
            message="Invalid configuration: problem.p: p must lie in (2,4)",
            details={"violations": [violation]},
        )
        code = handle_error(exc, stream)
        payload = json.loads(stream.getvalue())
        assert code is ExitCode.CONFIG_ERROR
        assert payload["exit_code"] == 3
        assert payload["error"]["code"] == exc.code
        assert payload["error"]["details"]["violations"][0]["key"] == "problem.p"

    def test_unexpected_error_is_internal(self):
        """Test that foreign exceptions are reported without their message."""
        stream = io.StringIO()
        code = handle_error(KeyError("secret"), stream)
        payload = json.loads(stream.getvalue())
        assert code is ExitCode.SOLVER_FAILURE
        assert payload["error"]["code"] == "internal_error"
        assert payload["error"]["details"] == {"type": "KeyError"}
        assert "secret" not in payload["error"]["message"]
