"""Problem parameters, radial potentials and nodal radii."""

from dataclasses import dataclass, field, replace
from enum import StrEnum
from pathlib import Path
from typing import Protocol

import numpy as np
from numpy.typing import NDArray

from src.core.exceptions import ValidationError

type FloatArray = NDArray[np.float64]

P_LOWER = 2.0
P_UPPER = 4.0
EMULATION_P_LOWER = 3.0


class DomainMode(StrEnum):
    """How the truncated ball is interpreted."""

    BALL = "ball"
    R3_EMULATION = "r3-emulation"


class RadialPotential(Protocol):
    """A radial potential V(r) with its radial derivative."""

    @property
    def spec(self) -> str: ...

    def __call__(self, r: FloatArray) -> FloatArray: ...

    def derivative(self, r: FloatArray) -> FloatArray | None: ...

    def minimum(self, radius: float) -> float: ...


@dataclass(frozen=True)
class ConstantPotential:
    """V(r) = value."""

    value: float

    @property
    def spec(self) -> str:
        return f"constant:{self.value!r}"

    def __call__(self, r: FloatArray) -> FloatArray:
        return np.full_like(r, self.value, dtype=np.float64)

    def derivative(self, r: FloatArray) -> FloatArray:
        return np.zeros_like(r, dtype=np.float64)

    def minimum(self, radius: float) -> float:  # noqa: ARG002
        return self.value


@dataclass(frozen=True, eq=False)
class TablePotential:
    """Piecewise-linear potential through tabulated (r, V) pairs.

    Values beyond the table are held constant; the derivative is the slope of
    the segment containing r.
    """

    radii: FloatArray
    values: FloatArray
    source: str = ""

    def __post_init__(self) -> None:
        if self.radii.ndim != 1 or self.radii.shape != self.values.shape:
            raise ValidationError(message="Potential table must have two equal columns")
        if self.radii.size < 2 or np.any(np.diff(self.radii) <= 0):  # noqa: PLR2004
            raise ValidationError(
                message="Potential table radii must be strictly increasing",
                details={"rows": int(self.radii.size)},
            )

    @property
    def spec(self) -> str:
        return f"table:{self.source}"

    def __call__(self, r: FloatArray) -> FloatArray:
        return np.interp(r, self.radii, self.values)

    def derivative(self, r: FloatArray) -> FloatArray:
        slopes = np.diff(self.values) / np.diff(self.radii)
        segment = np.searchsorted(self.radii, r, side="right") - 1
        inside = (segment >= 0) & (segment < slopes.size)
        out = np.zeros_like(r, dtype=np.float64)
        out[inside] = slopes[segment[inside]]
        return out

    def minimum(self, radius: float) -> float:
        knots = self.radii[self.radii < radius]
        probe = np.concatenate([[0.0, radius], knots])
        return float(np.min(self(probe)))


def parse_potential(spec: str, base_dir: Path | None = None) -> RadialPotential:
    """Build a potential from ``constant:<v>`` or ``table:<file>``.

    Table files are two-column ``r,V`` CSV text; a header line is allowed.
    """
    kind, _, arg = spec.partition(":")
    if kind == "constant":
        try:
            return ConstantPotential(float(arg))
        except ValueError as exc:
            raise ValidationError(
                message=f"Invalid constant potential value {arg!r}",
                details={"potential": spec},
            ) from exc
    if kind == "table":
        path = Path(arg)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise ValidationError(
                message=f"Potential table {path} does not exist",
                details={"potential": spec},
            )
        data = np.loadtxt(
            path, delimiter=",", comments="#", ndmin=2, skiprows=_header_rows(path)
        )
        return TablePotential(
            radii=data[:, 0].astype(np.float64),
            values=data[:, 1].astype(np.float64),
            source=arg,
        )
    raise ValidationError(
        message="Potential must be 'constant:<v>' or 'table:<file>'",
        details={"potential": spec},
    )


def _header_rows(path: Path) -> int:
    with path.open(encoding="utf-8") as handle:
        first = handle.readline().split(",")[0].strip()
    try:
        float(first)
    except ValueError:
        return 1
    return 0


@dataclass(frozen=True)
class ProblemParams:
    """Analytic parameters of the Kirchhoff problem (a is fixed to 1)."""

    b: float
    p: float
    potential: RadialPotential
    domain_radius: float
    k: int
    mode: DomainMode = DomainMode.BALL
    v0: float = field(init=False)

    def __post_init__(self) -> None:
        violations: list[str] = []
        if not P_LOWER < self.p < P_UPPER:
            violations.append("p must lie in (2,4)")
        elif self.mode is DomainMode.R3_EMULATION and not EMULATION_P_LOWER < self.p:
            violations.append("r3-emulation requires p in (3,4)")
        if self.b < 0:
            violations.append("b must be nonnegative")
        if self.domain_radius <= 0:
            violations.append("domain radius must be positive")
        if self.k < 0:
            violations.append("k must be a nonnegative integer")
        v0 = 0.0
        if self.domain_radius > 0:
            v0 = self.potential.minimum(self.domain_radius)
        if v0 <= 0:
            violations.append(
                "potential must be bounded below by a positive V0 on [0,R]"
            )
        if violations:
            raise ValidationError(
                message="; ".join(violations),
                details={"violations": violations},
            )
        object.__setattr__(self, "v0", v0)

    def with_b(self, b: float) -> "ProblemParams":
        return replace(self, b=b)

    def with_k(self, k: int) -> "ProblemParams":
        return replace(self, k=k)


@dataclass(frozen=True)
class RadiiVector:
    """Interior nodal radii r_1 < ... < r_k inside (0, R)."""

    interior: tuple[float, ...]
    outer: float

    def __post_init__(self) -> None:
        edges = self.edges
        gaps = np.diff(edges)
        if np.any(gaps <= 0):
            bad = int(np.argmin(gaps)) + 1
            raise ValidationError(
                message=(
                    "Radii must be strictly increasing "
                    f"(annulus {bad} has gap {gaps[bad - 1]:.3e})"
                ),
                details={"radii": [float(r) for r in edges]},
            )

    @classmethod
    def ball(cls, radius: float) -> "RadiiVector":
        return cls(interior=(), outer=radius)

    @property
    def k(self) -> int:
        return len(self.interior)

    @property
    def edges(self) -> FloatArray:
        """(r_0, r_1, ..., r_k, r_{k+1}) with r_0 = 0 and r_{k+1} = R."""
        return np.array([0.0, *self.interior, self.outer], dtype=np.float64)

    @property
    def gaps(self) -> FloatArray:
        return np.diff(self.edges)

    def key(self, digits: int = 12) -> tuple[float, ...]:
        """Radii rounded to ``digits`` significant digits."""
        return tuple(float(f"{r:.{digits}g}") for r in self.interior)
