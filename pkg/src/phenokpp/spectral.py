"""
Principal eigenpairs of the discrete operator d*Lap_x + Lap_theta + r.

The solver is shift-invert power iteration: with ``mu`` above every
diagonal value of r, ``mu*W - B`` is a symmetric positive-definite M-matrix,
each step solves ``(mu*W - B) y = W phi`` by conjugate gradients, and the
iterates stay entrywise positive and converge to the Perron eigenvector.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import BC, Axis, Grid, LinearOperator, assemble_operator, build_grid
from .landscape import Landscape, rescale_period, sample_on_grid

__all__ = [
    "ProblemKind",
    "EigenResult",
    "TruncationCurve",
    "GridPolicy",
    "ConvergenceError",
    "DiscretizationWarning",
    "principal_eigenpair",
    "rayleigh_quotient",
    "solve_landscape",
    "cell_grid",
    "truncation_grid",
    "eigen_truncation_sequence",
    "eigen_of_period",
    "lambda_of_period",
    "lambda_of_diffusivity",
    "DiffusivityEigen",
    "CURVE_COLUMNS",
    "write_curve_csv",
]

logger = logging.getLogger(__name__)

EPS_MONO = 1e-8
CURVE_COLUMNS = ("parameter", "lambda", "residual", "iterations", "nodes")


class ConvergenceError(RuntimeError):
    pass


class DiscretizationWarning(UserWarning):
    pass


class ProblemKind(str, enum.Enum):
    PERIODIC_NEUMANN = "periodic_neumann"
    MIXED = "mixed"
    DIRICHLET_BALL = "dirichlet_ball"
    PERIODIC_DIRICHLET_THETA = "periodic_dirichlet_theta"


@dataclass
class EigenResult:
    lam: float
    phi: np.ndarray
    residual: float
    iterations: int
    problem_kind: ProblemKind = ProblemKind.PERIODIC_NEUMANN
    cg_iterations: int = 0
    nodes: int = 0
    shift: float = 0.0

    @property
    def lambda_(self) -> float:
        return self.lam


def _grid_kind(grid: Grid) -> ProblemKind:
    space_dir = any(a.bc is BC.DIRICHLET for a in grid.space_axes)
    pheno_dir = any(a.bc is BC.DIRICHLET for a in grid.pheno_axes)
    if space_dir and pheno_dir:
        return ProblemKind.DIRICHLET_BALL
    if space_dir:
        return ProblemKind.MIXED
    if pheno_dir:
        return ProblemKind.PERIODIC_DIRICHLET_THETA
    return ProblemKind.PERIODIC_NEUMANN


def rayleigh_quotient(phi: np.ndarray, op: LinearOperator) -> float:
    """Weighted Rayleigh quotient ``<B phi, phi> / <W phi, phi>``.

    This is the trapezoid discretisation of
    ``(-int |grad phi|^2 + int r phi^2) / int phi^2``.
    """
    phi = np.asarray(phi, dtype=np.float64)
    denom = float(phi @ (op.weights * phi))
    if denom == 0.0:
        raise ValueError("Rayleigh quotient of the zero vector")
    return float(phi @ (op.matrix @ phi)) / denom


def principal_eigenpair(
    op: LinearOperator,
    sup_r: float | None = None,
    *,
    tol_lambda: float = 1e-12,
    tol_residual: float = 1e-10,
    cg_rtol: float = 1e-12,
    max_iterations: int = 20000,
) -> EigenResult:
    """Largest eigenvalue of the discrete operator and its positive eigenvector."""
    B, w = op.matrix, op.weights
    n = op.dim
    top = float(np.max(op.r_values))
    if sup_r is not None:
        top = max(top, float(sup_r))
    mu = top + 0.05 * abs(top) + 1.0
    K = (sp.diags(mu * w) - B).tocsr()
    diag = K.diagonal()
    precond = spla.LinearOperator((n, n), matvec=lambda v: v / diag, dtype=np.float64)

    # Rayleigh-quotient rounding is ~eps * |B|; do not ask for less.
    floor = 16.0 * np.finfo(float).eps * float(np.max(np.abs(B.diagonal())))
    tol_lam = max(tol_lambda, floor)

    phi = np.ones(n) / math.sqrt(n)
    lam = rayleigh_quotient(phi, op)
    cg_total = 0
    residual = math.inf
    for it in range(1, max_iterations + 1):
        count = [0]

        def _tick(_xk, count=count):
            count[0] += 1

        x0 = phi / max(mu - lam, 1e-300)
        y, info = spla.cg(K, w * phi, x0=x0, rtol=cg_rtol, atol=0.0, maxiter=10 * n + 100, M=precond, callback=_tick)
        cg_total += count[0]
        if info != 0:
            raise ConvergenceError(
                f"CG did not converge (info={info}) at power iteration {it} after {count[0]} CG steps; "
                f"operator may be ill-conditioned"
            )
        phi = y / np.linalg.norm(y)
        lam_new = rayleigh_quotient(phi, op)
        residual = float(np.linalg.norm((B @ phi - lam_new * (w * phi)) / w))
        change = abs(lam_new - lam)
        lam = lam_new
        if change <= tol_lam and residual <= tol_residual * (abs(lam) + 1.0):
            break
    else:
        raise ConvergenceError(
            f"power iteration did not converge in {max_iterations} iterations "
            f"(residual {residual:.3e}, {cg_total} CG steps)"
        )

    if np.min(phi) <= 0.0:
        raise ConvergenceError(
            f"principal eigenvector has non-positive entries (min {np.min(phi):.3e}); check assembly"
        )
    return EigenResult(
        lam=float(lam),
        phi=phi,
        residual=residual,
        iterations=it,
        problem_kind=_grid_kind(op.grid),
        cg_iterations=cg_total,
        nodes=n,
        shift=mu,
    )


@dataclass(frozen=True)
class GridPolicy:
    """How to discretise a landscape.

    ``space_nodes`` is the number of nodes per unit length in x; the
    phenotype box is ``[-pheno_halfwidth, pheno_halfwidth]^P`` with
    ``pheno_nodes`` nodes per axis, node-on-boundary spacing.
    """

    space_nodes: int = 32
    pheno_halfwidth: float = 1.0
    pheno_nodes: int = 17
    pheno_bc: BC = BC.NEUMANN

    def __post_init__(self) -> None:
        object.__setattr__(self, "pheno_bc", BC.parse(self.pheno_bc))
        if self.pheno_bc is BC.PERIODIC:
            raise ValueError("pheno_bc must be neumann or dirichlet")
        if self.space_nodes < 3 or self.pheno_nodes < 3:
            raise ValueError("space_nodes and pheno_nodes must be at least 3")
        if not self.pheno_halfwidth > 0:
            raise ValueError("pheno_halfwidth must be positive")

    @property
    def space_spacing(self) -> float:
        return 1.0 / self.space_nodes

    @property
    def pheno_spacing(self) -> float:
        return 2.0 * self.pheno_halfwidth / (self.pheno_nodes - 1)

    def to_dict(self) -> dict:
        return {
            "space_nodes": self.space_nodes,
            "pheno_halfwidth": self.pheno_halfwidth,
            "pheno_nodes": self.pheno_nodes,
            "pheno_bc": self.pheno_bc.value,
        }


def _pheno_box(policy: GridPolicy, P: int) -> list[Axis]:
    hw = policy.pheno_halfwidth
    if policy.pheno_bc is BC.NEUMANN:
        return [Axis(2 * hw, policy.pheno_nodes, BC.NEUMANN, -hw)] * P
    # same spacing, boundary nodes eliminated
    return [Axis(2 * hw, policy.pheno_nodes - 2, BC.DIRICHLET, -hw)] * P


def cell_grid(r: Landscape, policy: GridPolicy, *, nodes_per_axis: Sequence[int] | None = None) -> Grid:
    """Periodic cell of ``r`` times the phenotype box of ``policy``."""
    if nodes_per_axis is None:
        nodes_per_axis = [max(3, int(round(policy.space_nodes * p))) for p in r.period]
    space = [Axis(p, n, BC.PERIODIC) for p, n in zip(r.period, nodes_per_axis)]
    return build_grid(space, _pheno_box(policy, r.pheno_dim))


def _window(R: float, h: float) -> Axis:
    m = 2.0 * R / h
    k = int(round(m))
    if abs(m - k) > 1e-9 * max(1.0, m):
        raise ValueError(f"window half-width {R} is not a multiple of half the spacing {h}")
    return Axis(2.0 * R, k - 1, BC.DIRICHLET, -R)


def truncation_grid(r: Landscape, kind: ProblemKind | str, R: float, policy: GridPolicy) -> Grid:
    """Grid for one truncated eigenproblem at half-width ``R`` with the
    spacings of ``policy`` kept fixed."""
    kind = ProblemKind(kind)
    N, P = r.space_dim, r.pheno_dim
    hx, hth = policy.space_spacing, policy.pheno_spacing
    if kind is ProblemKind.PERIODIC_NEUMANN:
        return cell_grid(r, policy)
    if kind is ProblemKind.PERIODIC_DIRICHLET_THETA:
        space = cell_grid(r, policy).space_axes
        return build_grid(space, [_window(R, hth)] * P)
    space = [_window(R, hx)] * N
    if kind is ProblemKind.MIXED:
        return build_grid(space, _pheno_box(policy, P))
    return build_grid(space, [_window(R, hth)] * P)


def solve_landscape(r: Landscape, grid: Grid, d: float = 1.0, **kwargs) -> EigenResult:
    values = sample_on_grid(r, grid)
    op = assemble_operator(grid, values, d)
    return principal_eigenpair(op, r.sup_r, **kwargs)


@dataclass
class TruncationCurve:
    kind: ProblemKind
    radii: list[float]
    lambdas: list[float]
    residuals: list[float] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)
    nodes: list[int] = field(default_factory=list)
    converged: bool = False
    limit_estimate: float = math.nan
    extrapolated: float | None = None
    violations: list[tuple[float, float]] = field(default_factory=list)

    def rows(self) -> list[tuple]:
        return list(zip(self.radii, self.lambdas, self.residuals, self.iterations, self.nodes))

    @property
    def is_monotone(self) -> bool:
        return not self.violations


def monotonicity_violations(
    params: Sequence[float], values: Sequence[float], *, increasing: bool = True, eps: float = EPS_MONO
) -> list[tuple[float, float]]:
    """Pairs ``(parameter, drop)`` where the sequence moves the wrong way by more than ``eps``.

    Sub-threshold wrong-way steps are logged, not returned.
    """
    out = []
    for k in range(1, len(values)):
        step = values[k] - values[k - 1]
        drop = -step if increasing else step
        if drop > eps:
            out.append((float(params[k]), float(drop)))
        elif drop > 0:
            logger.info("monotonicity slip %.3e at parameter %g (below tolerance)", drop, params[k])
    return out


def _aitken(values: Sequence[float]) -> float | None:
    if len(values) < 3:
        return None
    a, b, c = values[-3:]
    denom = (c - b) - (b - a)
    if denom == 0.0 or not math.isfinite(denom):
        return None
    return c - (c - b) ** 2 / denom


def eigen_truncation_sequence(
    r: Landscape,
    kind: ProblemKind | str,
    radii: Iterable[float],
    policy: GridPolicy = GridPolicy(),
    *,
    tol_seq: float = 1e-3,
    eps_mono: float = EPS_MONO,
    d: float = 1.0,
) -> TruncationCurve:
    """Principal eigenvalues on growing truncation windows at fixed spacing."""
    kind = ProblemKind(kind)
    if kind is ProblemKind.PERIODIC_NEUMANN:
        raise ValueError("truncation sequences need a Mixed, DirichletBall or PeriodicDirichletTheta kind")
    radii = [float(R) for R in radii]
    if not radii:
        raise ValueError("radii must be non-empty")
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    curve = TruncationCurve(kind, [], [])
    for R in radii:
        res = solve_landscape(r, truncation_grid(r, kind, R, policy), d)
        curve.radii.append(R)
        curve.lambdas.append(res.lam)
        curve.residuals.append(res.residual)
        curve.iterations.append(res.iterations)
        curve.nodes.append(res.nodes)
    curve.limit_estimate = curve.lambdas[-1]
    curve.converged = len(radii) > 1 and abs(curve.lambdas[-1] - curve.lambdas[-2]) < tol_seq
    curve.extrapolated = _aitken(curve.lambdas)
    curve.violations = monotonicity_violations(radii, curve.lambdas, eps=eps_mono)
    if curve.violations:
        warnings.warn(
            f"{kind.value} truncation curve decreases beyond {eps_mono:g}: {curve.violations}",
            DiscretizationWarning,
            stacklevel=2,
        )
    return curve


def eigen_of_period(
    r: Landscape,
    L: float,
    policy: GridPolicy = GridPolicy(),
    *,
    scale_nodes: bool = True,
    d: float = 1.0,
) -> EigenResult:
    """Principal eigenpair for ``r(x/L, theta)`` on the cell ``[0, L]^N``.

    With ``scale_nodes`` the node count per axis is ``round(space_nodes * L)``
    so the spacing stays comparable across L; otherwise the node count of the
    unit cell is kept (matched resolution for the diffusivity identity).
    """
    rl = rescale_period(r, L)
    if scale_nodes:
        grid = cell_grid(rl, policy)
    else:
        base = [max(3, int(round(policy.space_nodes * p))) for p in r.period]
        grid = cell_grid(rl, policy, nodes_per_axis=base)
    return solve_landscape(rl, grid, d)


def lambda_of_period(r: Landscape, L: float, policy: GridPolicy = GridPolicy(), **kwargs) -> float:
    return eigen_of_period(r, L, policy, **kwargs).lam


@dataclass
class DiffusivityEigen:
    d: float
    direct: EigenResult
    scaled: EigenResult

    @property
    def lam(self) -> float:
        return self.direct.lam

    @property
    def scaling_residual(self) -> float:
        return abs(self.direct.lam - self.scaled.lam)


def lambda_of_diffusivity(r: Landscape, d: float, policy: GridPolicy = GridPolicy()) -> DiffusivityEigen:
    """Eigenvalue with spatial diffusivity ``d``, directly and via ``L = d**-0.5``."""
    if not (math.isfinite(d) and d > 0):
        raise ValueError(f"diffusivity must be positive, got {d}")
    direct = solve_landscape(r, cell_grid(r, policy), d)
    scaled = eigen_of_period(r, d**-0.5, policy, scale_nodes=False)
    return DiffusivityEigen(float(d), direct, scaled)


def write_curve_csv(path: str | Path, rows: Iterable[Sequence]) -> None:
    """Write ``parameter, lambda, residual, iterations, nodes`` rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)
        for p, lam, res, its, nodes in rows:
            writer.writerow([f"{p:.17g}", f"{lam:.17g}", f"{res:.17g}", int(its), int(nodes)])
