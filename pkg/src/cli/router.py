"""Argument parser for the ``nodal`` command line."""

import argparse
from pathlib import Path
from typing import NoReturn, override

from loguru import logger

from src.cli.commands import nehari, solve, studies, verify
from src.core.config import RunConfig
from src.core.exceptions import ConfigError
from src.services.run_service import Command, RunRequest


class CliArgs(argparse.Namespace):
    """Typed view of the parsed arguments."""

    command: Command | None = None
    config: Path | None = None
    out: Path | None = None
    seed: int | None = None
    force: bool = False
    log_level: str | None = None
    log_dir: Path | None = None
    k: int | None = None
    k_max: int | None = None
    b_list: tuple[float, ...] | None = None
    q: float | None = None
    field_file: Path | None = None
    oracle: bool = False

    def to_request(self, config: RunConfig, base_dir: Path | None) -> RunRequest:
        if self.command is None:
            raise ConfigError(message="No command given")
        return RunRequest(
            command=self.command,
            config=config,
            base_dir=base_dir,
            out=self.out,
            seed=self.seed,
            force=self.force,
            k=self.k,
            k_max=self.k_max,
            b_list=self.b_list,
            q=self.q,
            field_file=self.field_file,
            oracle=self.oracle,
        )


class CliParser(argparse.ArgumentParser):
    """Usage errors become configuration errors (exit code 3)."""

    @override
    def error(self, message: str) -> NoReturn:
        raise ConfigError(message=f"{self.prog}: {message}")


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML run configuration")
    common.add_argument("--out", type=Path, help="Output directory for the archive")
    common.add_argument("--seed", type=int, help="Master seed (overrides the config)")
    common.add_argument(
        "--force", action="store_true", help="Overwrite an existing output directory"
    )
    common.add_argument("--log-level", dest="log_level", help="Console log level")
    common.add_argument("--log-dir", dest="log_dir", type=Path, help="Log directory")
    return common


def build_parser() -> CliParser:
    parser = CliParser(
        prog="nodal",
        description="Least-energy nodal radial solutions of a Kirchhoff equation",
    )
    subparsers = parser.add_subparsers(
        dest="subcommand", required=True, parser_class=CliParser
    )
    common = _common_options()
    for module in (solve, verify, studies, nehari):
        logger.debug(f"Registering {module.__name__.rsplit('.', 1)[-1]} commands")
        module.register(subparsers, common)
    return parser
