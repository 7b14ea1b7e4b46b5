"""``solve``: one k-nodal solution with its diagnostics."""

import argparse

from src.services.run_service import Command


def register(
    subparsers: "argparse._SubParsersAction[argparse.ArgumentParser]",
    common: argparse.ArgumentParser,
) -> None:
    parser = subparsers.add_parser(
        "solve",
        parents=[common],
        help="Solve for the least-energy k-nodal radial solution",
    )
    parser.add_argument("--k", type=int, help="Number of interior nodal radii")
    parser.set_defaults(command=Command.SOLVE)
