"""Logging configuration for the nodal Kirchhoff solver."""

from pathlib import Path
import sys

from loguru import logger

from src.core.settings import LOG_DIR, LOG_LEVEL

FILE_FORMAT = (
    "{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} - {message}"
)
CONSOLE_FORMAT = (
    "<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan> - <level>{message}</level>"
)


def configure_logging(level: str | None = None, log_dir: Path | None = None) -> None:
    """Configure loguru with a console sink and rotating file sinks.

    Args:
        level: Console level; defaults to ``NODAL_LOG_LEVEL``.
        log_dir: Directory for log files; defaults to ``NODAL_LOG_DIR``.
    """
    logs_dir = log_dir if log_dir is not None else Path(LOG_DIR)
    logs_dir.mkdir(parents=True, exist_ok=True)

    logger.remove()

    # Console goes to stderr so stdout stays free for command output
    logger.add(
        sink=sys.stderr,
        format=CONSOLE_FORMAT,
        level=level or LOG_LEVEL,
        colorize=True,
    )

    logger.add(
        sink=logs_dir / "nodal_{time:YYYY-MM-DD}.log",
        format=FILE_FORMAT,
        level="DEBUG",
        rotation="00:00",
        retention="30 days",
        compression="zip",
        enqueue=True,
    )

    logger.add(
        sink=logs_dir / "nodal_errors_{time:YYYY-MM-DD}.log",
        format=FILE_FORMAT,
        level="ERROR",
        rotation="00:00",
        retention="90 days",
        compression="zip",
        enqueue=True,
    )

    logger.debug(
        f"Logging configured: console level {level or LOG_LEVEL}, files in {logs_dir}"
    )
