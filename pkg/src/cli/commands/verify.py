"""``verify``: monotonicity, Pohozaev and Sobolev-bound checks."""

import argparse

from src.services.run_service import Command


def register(
    subparsers: "argparse._SubParsersAction[argparse.ArgumentParser]",
    common: argparse.ArgumentParser,
) -> None:
    verify = subparsers.add_parser("verify", help="Run a verification study")
    checks = verify.add_subparsers(dest="check", required=True)

    monotonicity = checks.add_parser(
        "monotonicity", parents=[common], help="Energy ordering for k = 0..kmax"
    )
    monotonicity.add_argument("--kmax", type=int, dest="k_max", help="Largest k")
    monotonicity.set_defaults(command=Command.VERIFY_MONOTONICITY)

    pohozaev = checks.add_parser(
        "pohozaev", parents=[common], help="Pohozaev identity of the ground state"
    )
    pohozaev.set_defaults(command=Command.VERIFY_POHOZAEV)

    bounds = checks.add_parser(
        "bounds", parents=[common], help="Sobolev lower bounds and decay"
    )
    bounds.add_argument("--kmax", type=int, dest="k_max", help="Largest k")
    bounds.set_defaults(command=Command.VERIFY_BOUNDS)
