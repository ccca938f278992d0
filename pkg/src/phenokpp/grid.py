"""
Tensor-product grids and finite-difference operators.

A grid is the product of spatial axes (periodic cell, or a Dirichlet window
for truncated problems) and phenotype axes (Neumann box or Dirichlet
window). Nodes are ordered C-style with the spatial axes first and the
phenotype axes last, so the phenotype index varies fastest and a density
reshaped to ``(n_space, n_pheno)`` has contiguous phenotype rows.

Operators are stored in *stiffness form*: for the discrete operator
``A = d*Lap_x + Lap_theta + diag(r)`` (ghost-point Neumann reflection,
periodic wrap, Dirichlet elimination) we keep

    B = W @ A,

where ``W`` is the diagonal matrix of relative trapezoid weights (1 in the
interior, 1/2 on each Neumann boundary face). ``B`` is exactly symmetric,
its Laplacian part annihilates constants, and the eigenproblem
``A phi = lam phi`` is the generalised problem ``B phi = lam W phi``.
On grids without Neumann axes ``W`` is the identity and ``B == A``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "BC",
    "Axis",
    "Grid",
    "LinearOperator",
    "build_grid",
    "assemble_operator",
    "axis_stiffness",
    "axis_generator",
]


class BC(str, enum.Enum):
    PERIODIC = "periodic"
    NEUMANN = "neumann"
    DIRICHLET = "dirichlet"

    @classmethod
    def parse(cls, value: "BC | str") -> "BC":
        if isinstance(value, BC):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(
                f"unknown boundary condition {value!r}; expected one of "
                f"{[b.value for b in cls]}"
            ) from None


@dataclass(frozen=True)
class Axis:
    """One grid direction.

    ``points`` counts the unknowns on the axis. For a Dirichlet axis the two
    boundary nodes carry the zero value and are not stored; for a Neumann
    axis both boundary nodes are unknowns; a periodic axis stores one node
    per period image.
    """

    length: float
    points: int
    bc: BC = BC.PERIODIC
    origin: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "bc", BC.parse(self.bc))
        if not (math.isfinite(self.length) and self.length > 0):
            raise ValueError(f"axis length must be positive and finite, got {self.length}")
        if int(self.points) != self.points or self.points < 3:
            raise ValueError(f"axis needs at least 3 points, got {self.points}")
        object.__setattr__(self, "points", int(self.points))
        if not math.isfinite(self.origin):
            raise ValueError("axis origin must be finite")

    @property
    def spacing(self) -> float:
        if self.bc is BC.PERIODIC:
            return self.length / self.points
        if self.bc is BC.NEUMANN:
            return self.length / (self.points - 1)
        return self.length / (self.points + 1)

    @property
    def coordinates(self) -> np.ndarray:
        h = self.spacing
        i = np.arange(self.points, dtype=np.float64)
        if self.bc is BC.DIRICHLET:
            i += 1.0
        return self.origin + i * h

    @property
    def relative_weights(self) -> np.ndarray:
        """Trapezoid weights divided by the spacing."""
        w = np.ones(self.points)
        if self.bc is BC.NEUMANN:
            w[0] = w[-1] = 0.5
        return w

    @property
    def quadrature_weights(self) -> np.ndarray:
        # Dirichlet end values are zero, so the plain sum is the trapezoid rule.
        return self.relative_weights * self.spacing


def axis_stiffness(axis: Axis) -> sp.csr_matrix:
    """Symmetric 1D second-difference matrix ``w * D2`` for one axis."""
    n, h2 = axis.points, axis.spacing**2
    main = np.full(n, -2.0 / h2)
    off = np.full(n - 1, 1.0 / h2)
    if axis.bc is BC.NEUMANN:
        main[0] = main[-1] = -1.0 / h2
    mat = sp.diags([off, main, off], [-1, 0, 1], shape=(n, n), format="lil")
    if axis.bc is BC.PERIODIC:
        mat[0, n - 1] = 1.0 / h2
        mat[n - 1, 0] = 1.0 / h2
    return mat.tocsr()


def axis_generator(axis: Axis) -> np.ndarray:
    """Dense 1D second-difference operator (ghost-point form, not symmetric
    for Neumann axes)."""
    return axis_stiffness(axis).toarray() / axis.relative_weights[:, None]


@dataclass(frozen=True)
class Grid:
    space_axes: tuple[Axis, ...]
    pheno_axes: tuple[Axis, ...]

    @property
    def axes(self) -> tuple[Axis, ...]:
        return self.space_axes + self.pheno_axes

    @property
    def space_dim(self) -> int:
        return len(self.space_axes)

    @property
    def pheno_dim(self) -> int:
        return len(self.pheno_axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.points for a in self.axes)

    @property
    def space_shape(self) -> tuple[int, ...]:
        return tuple(a.points for a in self.space_axes)

    @property
    def pheno_shape(self) -> tuple[int, ...]:
        return tuple(a.points for a in self.pheno_axes)

    @property
    def n_space(self) -> int:
        return math.prod(self.space_shape)

    @property
    def n_pheno(self) -> int:
        return math.prod(self.pheno_shape)

    @property
    def total_nodes(self) -> int:
        return math.prod(self.shape)

    def index(self, multi_index: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(multi_index), self.shape))

    def multi_index(self, index: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(index, self.shape))

    @cached_property
    def _mesh(self) -> list[np.ndarray]:
        return [m.ravel() for m in np.meshgrid(*(a.coordinates for a in self.axes), indexing="ij")]

    def space_coords(self) -> np.ndarray:
        """Spatial coordinates of every node, shape ``(total_nodes, N)``."""
        return np.stack(self._mesh[: self.space_dim], axis=-1)

    def pheno_coords(self) -> np.ndarray:
        """Phenotype coordinates of every node, shape ``(total_nodes, P)``."""
        return np.stack(self._mesh[self.space_dim :], axis=-1)

    @cached_property
    def relative_weights(self) -> np.ndarray:
        w = np.ones(1)
        for a in self.axes:
            w = np.multiply.outer(w, a.relative_weights).ravel()
        return w

    @cached_property
    def pheno_quadrature(self) -> np.ndarray:
        w = np.ones(1)
        for a in self.pheno_axes:
            w = np.multiply.outer(w, a.quadrature_weights).ravel()
        return w

    @cached_property
    def space_quadrature(self) -> np.ndarray:
        w = np.ones(1)
        for a in self.space_axes:
            w = np.multiply.outer(w, a.quadrature_weights).ravel()
        return w

    @property
    def cell_volume(self) -> float:
        return math.prod(a.spacing for a in self.axes)

    def describe(self) -> dict:
        return {
            "space": [[a.length, a.points, a.bc.value, a.origin] for a in self.space_axes],
            "pheno": [[a.length, a.points, a.bc.value, a.origin] for a in self.pheno_axes],
            "total_nodes": self.total_nodes,
        }


def build_grid(space: Sequence[Axis], pheno: Sequence[Axis]) -> Grid:
    space, pheno = tuple(space), tuple(pheno)
    if len(space) not in (1, 2):
        raise ValueError(f"spatial dimension must be 1 or 2, got {len(space)}")
    if len(pheno) not in (1, 2):
        raise ValueError(f"phenotype dimension must be 1 or 2, got {len(pheno)}")
    for a in pheno:
        if a.bc is BC.PERIODIC:
            raise ValueError("phenotype axes must be Neumann or Dirichlet")
    return Grid(space, pheno)


@dataclass(frozen=True, eq=False)
class LinearOperator:
    """Discrete ``d*Lap_x + Lap_theta + r`` in stiffness form.

    ``matrix`` is ``W @ A`` (symmetric); ``weights`` is the diagonal of ``W``.
    """

    grid: Grid
    matrix: sp.csr_matrix
    laplacian: sp.csr_matrix
    weights: np.ndarray
    r_values: np.ndarray
    diffusivity_x: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Action of the discrete operator itself, ``A v``."""
        return (self.matrix @ v) / self.weights

    def with_shift(self, c: float) -> "LinearOperator":
        """Operator for the landscape ``r + c``."""
        return assemble_operator(self.grid, self.r_values + c, self.diffusivity_x, laplacian=self.laplacian)


def _laplacian(grid: Grid, d: float) -> sp.csr_matrix:
    axes = grid.axes
    total = None
    for k, axis in enumerate(axes):
        factors = [
            axis_stiffness(a) if j == k else sp.diags(a.relative_weights)
            for j, a in enumerate(axes)
        ]
        term = factors[0]
        for f in factors[1:]:
            term = sp.kron(term, f, format="csr")
        if k < grid.space_dim:
            term = d * term
        total = term if total is None else total + term
    return total.tocsr()


def assemble_operator(
    grid: Grid,
    r_values: np.ndarray,
    d: float = 1.0,
    *,
    laplacian: sp.csr_matrix | None = None,
) -> LinearOperator:
    r_values = np.asarray(r_values, dtype=np.float64)
    if r_values.shape != (grid.total_nodes,):
        raise ValueError(f"r_values has shape {r_values.shape}, expected ({grid.total_nodes},)")
    if not np.all(np.isfinite(r_values)):
        raise ValueError("r_values contains NaN or Inf")
    if not (math.isfinite(d) and d > 0):
        raise ValueError(f"diffusivity must be positive, got {d}")
    lap = _laplacian(grid, float(d)) if laplacian is None else laplacian
    w = grid.relative_weights
    mat = (lap + sp.diags(w * r_values)).tocsr()
    mat.sort_indices()
    return LinearOperator(grid, mat, lap, w, r_values.copy(), float(d))
