"""Radial meshes and per-annulus piecewise-linear fields."""

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from src.core.exceptions import ValidationError
from src.models.problem import FloatArray, RadiiVector

type IntArray = NDArray[np.int_]


@dataclass(frozen=True, eq=False)
class RadialMesh:
    """Nodes on [0, R] containing every junction, with cellwise quadrature.

    ``quad_weights`` already carry the volume weight 4*pi*t^2 and the cell
    Jacobian, so a volume integral is ``sum(quad_weights * f(quad_points))``.
    """

    radii: RadiiVector
    nodes: FloatArray
    junction_nodes: tuple[int, ...]
    cell_annulus: IntArray
    quad_points: FloatArray
    quad_weights: FloatArray
    basis_left: FloatArray
    basis_right: FloatArray

    @property
    def num_nodes(self) -> int:
        return int(self.nodes.size)

    @property
    def num_cells(self) -> int:
        return int(self.nodes.size) - 1

    @property
    def widths(self) -> FloatArray:
        return np.diff(self.nodes)

    @property
    def num_annuli(self) -> int:
        return len(self.junction_nodes) - 1

    def annulus_slice(self, index: int) -> slice:
        """Node slice of annulus ``index`` (1-based), both end nodes included."""
        return slice(self.junction_nodes[index - 1], self.junction_nodes[index] + 1)

    def product_free_nodes(self) -> IntArray:
        """Nodes carrying unknowns of the product space (junctions and R fixed)."""
        fixed = set(self.junction_nodes[1:])
        free = [j for j in range(self.num_nodes) if j not in fixed]
        return np.array(free, dtype=np.int_)

    def glued_free_nodes(self) -> IntArray:
        """Nodes carrying unknowns of the glued space (only R fixed)."""
        return np.arange(self.num_nodes - 1, dtype=np.int_)


@dataclass(frozen=True, eq=False)
class AnnularField:
    """Component ``index`` (1-based) supported on annulus [r_{i-1}, r_i]."""

    index: int
    mesh: RadialMesh
    values: FloatArray

    def __post_init__(self) -> None:
        window = self.mesh.annulus_slice(self.index)
        expected = window.stop - window.start
        if self.values.shape != (expected,):
            raise ValidationError(
                message=(
                    f"Component {self.index} needs {expected} nodal values, "
                    f"got {self.values.shape}"
                ),
            )
        inner_edge = self.index > 1 and self.values[0] != 0.0
        if self.values[-1] != 0.0 or inner_edge:
            raise ValidationError(
                message=f"Component {self.index} must vanish on its annulus boundary",
                details={"annulus": self.index},
            )

    @property
    def window(self) -> slice:
        return self.mesh.annulus_slice(self.index)

    @property
    def nodes(self) -> FloatArray:
        return self.mesh.nodes[self.window]

    def full(self) -> FloatArray:
        """Nodal vector on the whole mesh, zero outside the annulus."""
        out = np.zeros(self.mesh.num_nodes, dtype=np.float64)
        out[self.window] = self.values
        return out

    def scaled(self, factor: float) -> "AnnularField":
        return AnnularField(self.index, self.mesh, self.values * factor)

    @property
    def sign(self) -> int:
        """Expected sign (-1)^(i+1) of the component."""
        return 1 if self.index % 2 == 1 else -1

    def respects_sign(self) -> bool:
        return bool(np.all(self.sign * self.values >= 0.0))


@dataclass(frozen=True, eq=False)
class NodalCandidate:
    """The (k+1)-tuple of annular components on one mesh."""

    mesh: RadialMesh
    components: tuple[AnnularField, ...]

    def __post_init__(self) -> None:
        if len(self.components) != self.mesh.num_annuli:
            raise ValidationError(
                message=(
                    f"Expected {self.mesh.num_annuli} components, "
                    f"got {len(self.components)}"
                ),
            )
        for position, component in enumerate(self.components, start=1):
            if component.mesh is not self.mesh or component.index != position:
                raise ValidationError(
                    message=(
                        f"Component {position} is not defined on the candidate mesh"
                    ),
                    details={"annulus": position},
                )

    @property
    def radii(self) -> RadiiVector:
        return self.mesh.radii

    @property
    def k(self) -> int:
        return self.mesh.num_annuli - 1

    @classmethod
    def from_glued(cls, mesh: RadialMesh, u: FloatArray) -> "NodalCandidate":
        """Split a glued nodal vector into components; junction values are dropped."""
        values = np.array(u, dtype=np.float64, copy=True)
        values[list(mesh.junction_nodes[1:])] = 0.0
        components = tuple(
            AnnularField(i, mesh, values[mesh.annulus_slice(i)].copy())
            for i in range(1, mesh.num_annuli + 1)
        )
        return cls(mesh, components)

    def glued(self) -> FloatArray:
        out = np.zeros(self.mesh.num_nodes, dtype=np.float64)
        for component in self.components:
            out[component.window] += component.values
        return out

    def scaled(self, factors: FloatArray) -> "NodalCandidate":
        return NodalCandidate(
            self.mesh,
            tuple(
                c.scaled(float(t))
                for c, t in zip(self.components, factors, strict=True)
            ),
        )

    def sign_enforced(self) -> "NodalCandidate":
        """Replace component i by (-1)^(i+1)|u_i|."""
        return NodalCandidate(
            self.mesh,
            tuple(
                AnnularField(c.index, self.mesh, c.sign * np.abs(c.values))
                for c in self.components
            ),
        )

    def respects_signs(self) -> bool:
        return all(c.respects_sign() for c in self.components)
