"""Data Access Object for nodal fields and plot-ready CSV tables."""

import csv
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from src.core.exceptions import NotFoundError, ValidationError
from src.models.problem import FloatArray, RadiiVector

type Cell = str | int | float | bool | None


def format_number(value: float) -> str:
    """17 significant digits; parses back to the same double."""
    return f"{value:.17g}"


def _format_cell(value: Cell) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format_number(value)
    return str(value)


@dataclass(frozen=True, eq=False)
class FieldRecord:
    """A stored field; ``annulus == 0`` marks a glued profile."""

    annulus: int
    radii: RadiiVector
    t: FloatArray
    u: FloatArray


def _header(annulus: int, radii: RadiiVector) -> str:
    interior = ";".join(format_number(r) for r in radii.interior)
    return f"# annulus={annulus} radii={interior} R={format_number(radii.outer)}"


def _parse_header(line: str, path: Path) -> tuple[int, RadiiVector]:
    fields = dict(
        part.split("=", 1) for part in line.removeprefix("#").split() if "=" in part
    )
    try:
        annulus = int(fields["annulus"])
        interior = tuple(float(r) for r in fields["radii"].split(";") if r)
        outer = float(fields["R"])
    except (KeyError, ValueError) as exc:
        raise ValidationError(
            message=f"Malformed field header in {path.name}",
            details={"header": line.strip()},
        ) from exc
    return annulus, RadiiVector(interior, outer)


def write_field(
    path: Path, t: FloatArray, u: FloatArray, *, annulus: int, radii: RadiiVector
) -> Path:
    """Write a ``t,u`` field with its annulus and radii header."""
    with path.open("w", encoding="utf-8", newline="") as f:
        f.write(_header(annulus, radii) + "\n")
        writer = csv.writer(f)
        writer.writerow(["t", "u"])
        writer.writerows(
            [format_number(float(a)), format_number(float(b))]
            for a, b in zip(t, u, strict=True)
        )
    return path


def read_field(path: Path) -> FieldRecord:
    """Read a field written by ``write_field``."""
    if not path.is_file():
        raise NotFoundError(message=f"Field file {path} does not exist")
    with path.open(encoding="utf-8", newline="") as f:
        annulus, radii = _parse_header(f.readline(), path)
        rows = list(csv.DictReader(f))
    t = np.array([float(row["t"]) for row in rows], dtype=np.float64)
    u = np.array([float(row["u"]) for row in rows], dtype=np.float64)
    return FieldRecord(annulus=annulus, radii=radii, t=t, u=u)


def write_table(
    path: Path, header: Sequence[str], rows: Iterable[Sequence[Cell]]
) -> Path:
    """Write a CSV table; an empty ``rows`` leaves the header only."""
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows([_format_cell(c) for c in row] for row in rows)
    return path


def read_table(path: Path) -> list[dict[str, str]]:
    if not path.is_file():
        raise NotFoundError(message=f"Table {path} does not exist")
    with path.open(encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))
