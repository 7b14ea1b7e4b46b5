"""Console entry point of the nodal Kirchhoff solver."""

from collections.abc import Sequence
import json
import sys

from loguru import logger

from src.cli.router import CliArgs, build_parser
from src.core.config import load_config
from src.core.error_handlers import ExitCode, handle_error
from src.core.exceptions import SolverError, VerdictFailure
from src.core.logging_config import configure_logging
from src.schemas.archive import RunArchive
from src.services.run_service import run


def _summary(archive: RunArchive, path: str) -> str:
    return json.dumps(
        {
            "command": archive.command,
            "archive": path,
            "passed": archive.passed,
            "verdicts": archive.verdicts,
            "stages": {s.name: str(s.state) for s in archive.stages},
        },
        indent=2,
    )


def main(argv: Sequence[str] | None = None) -> int:
    """Run one command; returns the process exit code."""
    args = CliArgs()
    try:
        build_parser().parse_args(argv, namespace=args)
        configure_logging(level=args.log_level, log_dir=args.log_dir)
        config, base_dir = load_config(args.config)
        archive, path = run(args.to_request(config, base_dir))
        sys.stdout.write(_summary(archive, str(path)) + "\n")
        if archive.failed_stages:
            raise SolverError(
                message="One or more stages failed",
                details={"stages": [s.name for s in archive.failed_stages]},
            )
        if not archive.passed:
            raise VerdictFailure(
                details={
                    "failed": sorted(k for k, v in archive.verdicts.items() if not v)
                }
            )
    except Exception as exc:  # noqa: BLE001
        return int(handle_error(exc))
    logger.success("All verdicts passed")
    return int(ExitCode.OK)


if __name__ == "__main__":
    sys.exit(main())
