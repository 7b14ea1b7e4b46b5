"""``sweep-b`` and ``sp-estimate``."""

import argparse

from src.services.run_service import Command


def parse_b_list(text: str) -> tuple[float, ...]:
    """Comma-separated nonnegative b values."""
    try:
        values = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        msg = f"invalid b list {text!r}"
        raise argparse.ArgumentTypeError(msg) from exc
    if not values or any(b < 0 for b in values):
        msg = "b list must hold nonnegative values"
        raise argparse.ArgumentTypeError(msg)
    return values


def register(
    subparsers: "argparse._SubParsersAction[argparse.ArgumentParser]",
    common: argparse.ArgumentParser,
) -> None:
    sweep = subparsers.add_parser(
        "sweep-b", parents=[common], help="Follow the k-nodal solution as b tends to 0"
    )
    sweep.add_argument("--k", type=int, help="Number of interior nodal radii")
    sweep.add_argument(
        "--blist", type=parse_b_list, dest="b_list", help="e.g. 0.1,0.01,0.001,0"
    )
    sweep.set_defaults(command=Command.SWEEP_B)

    estimate = subparsers.add_parser(
        "sp-estimate", parents=[common], help="Estimate the radial Sobolev constant"
    )
    estimate.add_argument("--q", type=float, help="Exponent in [2, 6]; defaults to p")
    estimate.set_defaults(command=Command.SP_ESTIMATE)
