"""``nehari-check``: project a stored candidate and print its certificates."""

import argparse
from pathlib import Path

from src.services.run_service import Command


def register(
    subparsers: "argparse._SubParsersAction[argparse.ArgumentParser]",
    common: argparse.ArgumentParser,
) -> None:
    parser = subparsers.add_parser(
        "nehari-check",
        parents=[common],
        help="Project a candidate onto the constrained Nehari set",
    )
    parser.add_argument(
        "--field",
        type=Path,
        dest="field_file",
        help="Glued profile written by solve; defaults to the initial candidate",
    )
    parser.add_argument("--k", type=int, help="k of the default candidate")
    parser.add_argument(
        "--oracle", action="store_true", help="Cross-check with the multistart oracle"
    )
    parser.set_defaults(command=Command.NEHARI_CHECK)
