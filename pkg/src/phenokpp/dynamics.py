"""
Time integration of the nonlocal model

    u_t = d*Lap_x u + Lap_theta u + u * (r - rho),    rho = int u dtheta,

plus the a-priori and coth monitors and a Picard fixed-point solver used as
an independent reference integrator.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid, LinearOperator, assemble_operator, axis_generator
from .landscape import Landscape, sample_on_grid

__all__ = [
    "InitialKind",
    "InitialDatum",
    "initial_values",
    "Monitors",
    "SimState",
    "Trajectory",
    "Verdict",
    "Thresholds",
    "PicardResult",
    "NonContractionError",
    "compute_rho",
    "total_mass",
    "make_state",
    "apriori_constant",
    "rho_apriori_bound",
    "default_dt",
    "reaction_step",
    "diffusion_step",
    "linear_step",
    "step",
    "simulate",
    "coth_bound",
    "coth_monitor",
    "picard_solve",
    "classify_trajectory",
    "classify_long_time",
    "decay_rate_estimate",
    "write_frames_csv",
    "write_u_dump",
    "read_u_dump",
]

logger = logging.getLogger(__name__)

TOL_BOUND = 1e-6


class InitialKind(str, enum.Enum):
    CONSTANT_PATCH = "constant_patch"
    GAUSSIAN_BUMP = "gaussian_bump"
    CUSTOM = "custom"


INITIAL_PARAMS: dict[InitialKind, dict[str, float | None]] = {
    # radius <= 0 means "everywhere" along that variable
    InitialKind.CONSTANT_PATCH: {"amplitude": 1.0, "x_radius": 0.0, "theta_radius": 0.0, "x_center": 0.0, "theta_center": 0.0},
    InitialKind.GAUSSIAN_BUMP: {"amplitude": 1.0, "width": 0.2, "x_center": 0.0, "theta_center": 0.0},
    InitialKind.CUSTOM: {},
}


@dataclass(frozen=True)
class InitialDatum:
    kind: InitialKind = InitialKind.CONSTANT_PATCH
    params: Mapping[str, float] = field(default_factory=dict)
    values: Callable[[np.ndarray, np.ndarray], np.ndarray] | np.ndarray | None = None

    def __post_init__(self) -> None:
        kind = InitialKind(self.kind)
        object.__setattr__(self, "kind", kind)
        allowed = INITIAL_PARAMS[kind]
        unknown = set(self.params) - set(allowed)
        if unknown:
            raise ValueError(f"unknown parameter(s) {sorted(unknown)} for initial datum {kind.value}")
        full = {k: float(self.params.get(k, v)) for k, v in allowed.items()}
        object.__setattr__(self, "params", full)
        if kind is InitialKind.CUSTOM and self.values is None:
            raise ValueError("custom initial datum needs values")
        if kind is not InitialKind.CUSTOM and full["amplitude"] < 0:
            raise ValueError("initial amplitude must be nonnegative")
        if kind is InitialKind.GAUSSIAN_BUMP and full["width"] <= 0:
            raise ValueError("gaussian width must be positive")

    def to_dict(self) -> dict:
        if self.kind is InitialKind.CUSTOM:
            raise ValueError("custom initial data are not serialisable")
        return {"kind": self.kind.value, "params": dict(self.params)}


def _periodic_distance(x: np.ndarray, center: float, grid: Grid) -> np.ndarray:
    from .grid import BC

    d2 = np.zeros(x.shape[0])
    for k, axis in enumerate(grid.space_axes):
        dx = x[:, k] - center
        if axis.bc is BC.PERIODIC:
            dx = dx - axis.length * np.round(dx / axis.length)
        d2 += dx**2
    return np.sqrt(d2)


def initial_values(datum: InitialDatum, grid: Grid) -> np.ndarray:
    x, th = grid.space_coords(), grid.pheno_coords()
    p = datum.params
    if datum.kind is InitialKind.CUSTOM:
        v = datum.values
        u = np.asarray(v(x, th) if callable(v) else v, dtype=np.float64)
        u = np.broadcast_to(u, (grid.total_nodes,)).copy()
    elif datum.kind is InitialKind.CONSTANT_PATCH:
        u = np.full(grid.total_nodes, p["amplitude"])
        if p["x_radius"] > 0:
            u[_periodic_distance(x, p["x_center"], grid) > p["x_radius"]] = 0.0
        if p["theta_radius"] > 0:
            u[np.linalg.norm(th - p["theta_center"], axis=-1) > p["theta_radius"]] = 0.0
    else:
        dist2 = _periodic_distance(x, p["x_center"], grid) ** 2
        dist2 += np.sum((th - p["theta_center"]) ** 2, axis=-1)
        u = p["amplitude"] * np.exp(-0.5 * dist2 / p["width"] ** 2)
    if not np.all(np.isfinite(u)) or np.any(u < 0):
        raise ValueError("initial datum must be finite and nonnegative")
    return u


def compute_rho(u: np.ndarray, grid: Grid) -> np.ndarray:
    """Trapezoid integral of u over the phenotype axes, one value per spatial node."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (grid.total_nodes,):
        raise ValueError(f"u has shape {u.shape}, expected ({grid.total_nodes},)")
    return u.reshape(grid.n_space, grid.n_pheno) @ grid.pheno_quadrature


def total_mass(u: np.ndarray, grid: Grid) -> float:
    return float(grid.space_quadrature @ compute_rho(u, grid))


@dataclass
class Monitors:
    bound_A: float
    max_rho: float = 0.0
    max_bound_ratio: float = 0.0
    bound_trips: int = 0
    dt_halvings: int = 0
    violations: list[tuple[float, float]] = field(default_factory=list)


@dataclass
class SimState:
    t: float
    u: np.ndarray
    rho: np.ndarray
    mass: float
    monitors: Monitors

    def check(self, grid: Grid) -> None:
        if np.any(self.u < 0):
            raise AssertionError("negative density")
        if np.max(np.abs(compute_rho(self.u, grid) - self.rho)) > 1e-13 * max(1.0, np.max(np.abs(self.rho))):
            raise AssertionError("stored rho out of sync with u")


def apriori_constant(rho0: np.ndarray, r_bar: float) -> float:
    """``A = max(|rho(0)|_inf, r_bar)``."""
    return max(float(np.max(rho0)) if np.size(rho0) else 0.0, float(r_bar))


def make_state(u0: np.ndarray, grid: Grid, r_bar: float, t: float = 0.0) -> SimState:
    u0 = np.asarray(u0, dtype=np.float64).copy()
    rho = compute_rho(u0, grid)
    A = apriori_constant(rho, r_bar)
    mon = Monitors(bound_A=A, max_rho=float(np.max(rho)))
    mon.max_bound_ratio = mon.max_rho / A if A > 0 else 0.0
    return SimState(t, u0, rho, float(grid.space_quadrature @ rho), mon)


def rho_apriori_bound(state: SimState, A: float | None = None, tol: float = TOL_BOUND) -> bool:
    """True iff ``max(rho) <= A * (1 + tol)``; failures are recorded on the state."""
    mon = state.monitors
    A = mon.bound_A if A is None else A
    peak = float(np.max(state.rho))
    ratio = peak / A if A > 0 else (0.0 if peak == 0 else math.inf)
    mon.max_rho = max(mon.max_rho, peak)
    ok = peak <= A * (1.0 + tol)
    if not ok:
        mon.violations.append((state.t, ratio))
    return ok


def default_dt(r_bar: float, A: float) -> float:
    return 0.1 / max(1.0, r_bar + A)


# -- substeps ---------------------------------------------------------------


def _broadcast_space(values: np.ndarray, grid: Grid) -> np.ndarray:
    return np.repeat(values, grid.n_pheno)


def reaction_step(u: np.ndarray, dt: float, r_values: np.ndarray, grid: Grid) -> np.ndarray:
    """Exact exponential update for ``u' = u (r - rho)`` over ``dt``.

    rho is held frozen inside the exponential at the average of its value
    before the step and after a frozen-rho predictor; both factors are
    positive so nonnegativity is preserved for any dt.
    """
    rho0 = compute_rho(u, grid)
    growth = dt * r_values
    pred = u * np.exp(growth - dt * _broadcast_space(rho0, grid))
    rho1 = compute_rho(pred, grid)
    return u * np.exp(growth - 0.5 * dt * _broadcast_space(rho0 + rho1, grid))


def _propagators(op: LinearOperator, dt: float, scheme: str):
    key = (scheme, dt)
    cache = op._cache
    if key in cache:
        return cache[key]
    if scheme == "exact":
        grid = op.grid
        mats = []
        for k, axis in enumerate(grid.axes):
            coef = op.diffusivity_x if k < grid.space_dim else 1.0
            E = scipy.linalg.expm(dt * coef * axis_generator(axis))
            # entries are positive in exact arithmetic; drop round-off negatives
            mats.append(np.maximum(E, 0.0))
        value = mats
    elif scheme == "backward_euler":
        K = (sp.diags(op.weights) - dt * op.laplacian).tocsr()
        value = (K, K.diagonal())
    else:
        raise ValueError(f"unknown diffusion scheme {scheme!r}")
    if len(cache) > 16:
        cache.clear()
    cache[key] = value
    return value


def diffusion_step(u: np.ndarray, dt: float, op: LinearOperator, scheme: str = "exact") -> np.ndarray:
    """Advance the pure diffusion ``u' = (d Lap_x + Lap_theta) u`` by dt.

    ``exact`` applies the per-axis matrix exponentials (the discrete
    Laplacian is a Kronecker sum); ``backward_euler`` solves
    ``(W - dt Lap) u_new = W u`` by conjugate gradients.
    """
    prop = _propagators(op, dt, scheme)
    if scheme == "exact":
        v = u.reshape(op.grid.shape)
        for k, E in enumerate(prop):
            v = np.moveaxis(np.tensordot(E, v, axes=([1], [k])), 0, k)
        return np.ascontiguousarray(v).ravel()
    K, diag = prop
    n = K.shape[0]
    M = spla.LinearOperator((n, n), matvec=lambda x: x / diag, dtype=np.float64)
    out, info = spla.cg(K, op.weights * u, x0=u, rtol=1e-13, atol=0.0, maxiter=10 * n + 100, M=M)
    if info != 0:
        raise RuntimeError(f"CG failed in backward Euler diffusion (info={info})")
    # CG round-off can leave tiny negatives where u is exactly zero
    return np.maximum(out, 0.0)


def linear_step(u: np.ndarray, dt: float, coefficient: np.ndarray, op: LinearOperator, scheme: str = "exact") -> np.ndarray:
    """Strang step of the linear flow ``u' = Lap u + coefficient * u``."""
    half = np.exp(0.5 * dt * coefficient)
    return half * diffusion_step(half * u, dt, op, scheme)


def step(
    state: SimState,
    dt: float,
    r_values: np.ndarray,
    op: LinearOperator,
    *,
    scheme: str = "exact",
) -> SimState:
    """One Strang step: half reaction, full diffusion, half reaction."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    grid = op.grid
    u = reaction_step(state.u, 0.5 * dt, r_values, grid)
    u = diffusion_step(u, dt, op, scheme)
    u = reaction_step(u, 0.5 * dt, r_values, grid)
    if np.any(u < 0):
        raise AssertionError("negative density after step")
    rho = compute_rho(u, grid)
    new = SimState(state.t + dt, u, rho, float(grid.space_quadrature @ rho), state.monitors)
    return new


# -- trajectories -------------------------------------------------------------


@dataclass
class Trajectory:
    times: np.ndarray
    sup_rho: np.ndarray
    sup_u: np.ndarray
    mass: np.ndarray
    frame_times: list[float]
    frames: list[np.ndarray]
    final: SimState
    dt: float
    sup_inner: np.ndarray | None = None
    coth_radius: float | None = None
    coth_tail_sup: float = 0.0
    r_bar: float = 0.0
    checkpoints: dict[float, np.ndarray] = field(default_factory=dict)

    @property
    def monitors(self) -> Monitors:
        return self.final.monitors

    @property
    def horizon(self) -> float:
        return float(self.times[-1])


def simulate(
    r_values: np.ndarray,
    grid: Grid,
    u0: np.ndarray,
    T: float,
    *,
    d: float = 1.0,
    r_bar: float | None = None,
    dt: float | None = None,
    scheme: str = "exact",
    record_every: int = 0,
    checkpoint_times: Sequence[float] = (),
    coth_radius: float | None = None,
    op: LinearOperator | None = None,
    max_halvings: int = 20,
) -> Trajectory:
    """Integrate from ``u0`` to time ``T``.

    ``dt`` defaults to ``0.1 / max(1, r_bar + A)``; it is halved whenever
    a step would break the a-priori bound on rho. When ``coth_radius`` is
    given, the sup over x of the phenotype integral restricted to
    ``|theta| <= coth_radius`` is recorded for :func:`coth_monitor`.
    """
    r_values = np.asarray(r_values, dtype=np.float64)
    if r_bar is None:
        r_bar = float(np.max(r_values))
    if op is None:
        op = assemble_operator(grid, np.zeros(grid.total_nodes), d)
    state = make_state(u0, grid, r_bar)
    mon = state.monitors
    if dt is None:
        dt = default_dt(r_bar, mon.bound_A)
    n_steps = max(1, math.ceil(T / dt - 1e-12))
    dt = T / n_steps

    inner_w = None
    tail_sup = 0.0
    if coth_radius is not None:
        th = grid.pheno_coords()[: grid.n_pheno]
        inside = np.linalg.norm(th, axis=-1) <= coth_radius
        inner_w = grid.pheno_quadrature * inside
        outside_all = np.tile(~inside, grid.n_space)
        if np.any(outside_all):
            tail_sup = float(max(0.0, np.max(r_values[outside_all])))

    times, sup_rho, sup_u, mass, sup_inner = [0.0], [float(np.max(state.rho))], [float(np.max(state.u))], [state.mass], []
    if inner_w is not None:
        sup_inner.append(float(np.max(state.u.reshape(grid.n_space, grid.n_pheno) @ inner_w)))
    frame_times, frames = [0.0], [state.rho.copy()]
    pending = sorted(float(t) for t in checkpoint_times)
    checkpoints: dict[float, np.ndarray] = {}
    if pending and pending[0] <= 0.0:
        checkpoints[pending.pop(0)] = state.u.copy()

    k = 0
    while state.t < T * (1 - 1e-14):
        h = min(dt, T - state.t)
        for _ in range(max_halvings + 1):
            trial = step(state, h, r_values, op, scheme=scheme)
            if np.max(trial.rho) <= mon.bound_A * (1.0 + TOL_BOUND):
                break
            mon.bound_trips += 1
            mon.dt_halvings += 1
            h *= 0.5
            dt = h
            logger.warning("a-priori bound tripped at t=%.6g; halving dt to %.3g", state.t, h)
        state = trial
        rho_apriori_bound(state)
        peak = float(np.max(state.rho))
        if mon.bound_A > 0:
            mon.max_bound_ratio = max(mon.max_bound_ratio, peak / mon.bound_A)
        k += 1
        times.append(state.t)
        sup_rho.append(peak)
        sup_u.append(float(np.max(state.u)))
        mass.append(state.mass)
        if inner_w is not None:
            sup_inner.append(float(np.max(state.u.reshape(grid.n_space, grid.n_pheno) @ inner_w)))
        if record_every and k % record_every == 0:
            frame_times.append(state.t)
            frames.append(state.rho.copy())
        while pending and state.t >= pending[0] - 1e-12:
            checkpoints[pending.pop(0)] = state.u.copy()
    if frame_times[-1] != state.t:
        frame_times.append(state.t)
        frames.append(state.rho.copy())

    return Trajectory(
        times=np.asarray(times),
        sup_rho=np.asarray(sup_rho),
        sup_u=np.asarray(sup_u),
        mass=np.asarray(mass),
        frame_times=frame_times,
        frames=frames,
        final=state,
        dt=dt,
        sup_inner=np.asarray(sup_inner) if inner_w is not None else None,
        coth_radius=coth_radius,
        coth_tail_sup=tail_sup,
        r_bar=float(r_bar),
        checkpoints=checkpoints,
    )


# -- coth bound ---------------------------------------------------------------


def coth_bound(H, tau, rho_sup):
    """``sqrt(H) coth(sqrt(H) tau + arcoth((rho_sup + sqrt(H)) / sqrt(H)))``.

    Evaluated in the algebraically equivalent form
    ``sqrt(H) + rho / (exp(2 a) + rho expm1(2 a) / (2 sqrt(H)))`` with
    ``a = sqrt(H) tau``, which has no cancellation and no overflow.
    """
    H = np.asarray(H, dtype=np.float64)
    tau = np.asarray(tau, dtype=np.float64)
    rho = np.asarray(rho_sup, dtype=np.float64)
    if np.any(H <= 0):
        raise ValueError("coth bound needs H > 0")
    if np.any(tau < 0) or np.any(rho < 0):
        raise ValueError("tau and rho_sup must be nonnegative")
    s = np.sqrt(H)
    a2 = np.minimum(2.0 * s * tau, 700.0)
    out = s + rho / (np.exp(a2) + rho * np.expm1(a2) / (2.0 * s))
    return out if out.ndim else float(out)


@dataclass
class CothReport:
    checks: int
    skipped: int
    max_violation: float
    windows: list[tuple[float, float, float, float]]

    @property
    def ok(self) -> bool:
        return self.max_violation <= TOL_BOUND


def coth_monitor(traj: Trajectory, tau: float) -> CothReport:
    """Check ``sup_x rho(t0 + tau) <= coth_bound(H, tau, |rho|)`` on every window.

    ``H = r_bar * sup_window sup_x int_{|sigma|<=M} u + |rho| * sup_{|theta|>M} r^+``
    and ``|rho|`` is the sup of rho over the window. Windows start at each
    recorded time; windows with ``H <= 0`` are skipped.
    """
    if traj.sup_inner is None:
        raise ValueError("trajectory was not recorded with a coth radius")
    t = traj.times
    windows = []
    worst = -math.inf
    skipped = 0
    j = 0
    for i in range(len(t)):
        while j < len(t) and t[j] < t[i] + tau - 1e-12:
            j += 1
        if j >= len(t):
            break
        sl = slice(i, j + 1)
        rho_norm = float(np.max(traj.sup_rho[sl]))
        H = traj.r_bar * float(np.max(traj.sup_inner[sl])) + rho_norm * traj.coth_tail_sup
        if H <= 0:
            skipped += 1
            continue
        span = float(t[j] - t[i])
        bound = coth_bound(H, span, rho_norm)
        excess = (traj.sup_rho[j] - bound) / bound
        worst = max(worst, excess)
        windows.append((float(t[i]), span, float(traj.sup_rho[j]), float(bound)))
    return CothReport(len(windows), skipped, max(worst, 0.0) if windows else 0.0, windows)


# -- Picard oracle -----------------------------------------------------------


class NonContractionError(RuntimeError):
    pass


@dataclass
class PicardResult:
    times: np.ndarray
    states: list[np.ndarray]
    iterations: list[int]
    increments: list[list[float]]
    slab: float

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _cn_linear(u0, rho_path, dt, r_values, op, grid):
    """Crank-Nicolson for ``u' = Lap u + (r - rho_path(t)) u`` on one slab."""
    lap, w = op.laplacian, op.weights
    n = grid.total_nodes
    W = sp.diags(w)
    out = [u0]
    u = u0
    Bn = lap + sp.diags(w * (r_values - _broadcast_space(rho_path[0], grid)))
    for m in range(1, len(rho_path)):
        Bm = lap + sp.diags(w * (r_values - _broadcast_space(rho_path[m], grid)))
        K = (W - 0.5 * dt * Bm).tocsr()
        rhs = w * u + 0.5 * dt * (Bn @ u)
        diag = K.diagonal()
        M = spla.LinearOperator((n, n), matvec=lambda x, dg=diag: x / dg, dtype=np.float64)
        u, info = spla.cg(K, rhs, x0=u, rtol=1e-14, atol=0.0, maxiter=10 * n + 100, M=M)
        if info != 0:
            raise RuntimeError(f"CG failed in Crank-Nicolson step (info={info})")
        out.append(u)
        Bn = Bm
    return out


def picard_solve(
    u0: np.ndarray,
    T: float,
    r_values: np.ndarray,
    grid: Grid,
    *,
    dt: float,
    d: float = 1.0,
    r_bar: float | None = None,
    tol: float = 1e-10,
    max_iterations: int = 200,
) -> PicardResult:
    """Solve the nonlinear problem as the fixed point of ``w -> u^w``.

    On each time slab, ``u^w`` solves the linear equation with competition
    frozen to ``rho[w](t, x)``; it is integrated by Crank-Nicolson with step
    ``dt / 4``. Iteration stops when successive rho paths differ by less
    than ``tol`` in sup norm over the slab. The returned states are sampled
    every ``dt``.
    """
    r_values = np.asarray(r_values, dtype=np.float64)
    if r_bar is None:
        r_bar = float(np.max(r_values))
    op = assemble_operator(grid, np.zeros(grid.total_nodes), d)
    n_outer = max(1, int(round(T / dt)))
    if abs(n_outer * dt - T) > 1e-9 * T:
        raise ValueError("T must be a multiple of dt")
    dt_in = dt / 4.0

    A = apriori_constant(compute_rho(u0, grid), r_bar)
    # slab: exp(r_bar tau) <= 2 and contraction estimate A e^{r_bar tau} (e^{r_bar tau} - 1)/r_bar <= 1/2
    tau = T
    if r_bar > 0:
        tau = min(tau, math.log(2.0) / r_bar)
    for _ in range(200):
        growth = math.exp(max(r_bar, 0.0) * tau)
        factor = A * growth * (math.expm1(r_bar * tau) / r_bar if r_bar > 0 else tau)
        if factor <= 0.5:
            break
        tau *= 0.5
    per_slab = max(1, int(tau / dt))  # outer steps per slab

    times = [0.0]
    states = [np.asarray(u0, dtype=np.float64).copy()]
    iterations, increments = [], []
    u_start = states[0]
    done = 0
    while done < n_outer:
        m_outer = min(per_slab, n_outer - done)
        m_in = 4 * m_outer
        rho_w = np.tile(compute_rho(u_start, grid), (m_in + 1, 1))
        hist = []
        for it in range(1, max_iterations + 1):
            path = _cn_linear(u_start, rho_w, dt_in, r_values, op, grid)
            rho_new = np.stack([compute_rho(v, grid) for v in path])
            inc = float(np.max(np.abs(rho_new - rho_w)))
            hist.append(inc)
            rho_w = rho_new
            if inc < tol:
                break
            if it >= 4 and hist[-1] > hist[-2] > hist[-3]:
                raise NonContractionError(
                    f"Picard iteration diverging on slab starting at t={times[-1]:.6g}: increments {hist}"
                )
        else:
            raise NonContractionError(f"Picard iteration did not converge in {max_iterations} iterations: {hist[-5:]}")
        iterations.append(it)
        increments.append(hist)
        t0 = times[-1]
        for j in range(1, m_outer + 1):
            times.append(t0 + j * dt)
            states.append(path[4 * j])
        u_start = path[-1]
        done += m_outer
    return PicardResult(np.asarray(times), states, iterations, increments, per_slab * dt)


# -- long-time behaviour ------------------------------------------------------


class Verdict(str, enum.Enum):
    PERSIST = "persist"
    EXTINCT = "extinct"
    UNDECIDED = "undecided"


@dataclass(frozen=True)
class Thresholds:
    eps_ext: float = 1e-4
    eps_per: float = 1e-2
    tail_fraction: float = 0.2
    delta: float = 0.05


def classify_trajectory(traj: Trajectory, thresholds: Thresholds = Thresholds()) -> Verdict:
    T = traj.horizon
    tail = traj.times >= (1.0 - thresholds.tail_fraction) * T
    s = traj.sup_rho[tail]
    # nonincreasing up to round-off in the last digits
    if np.all(s < thresholds.eps_ext) and np.all(np.diff(s) <= 1e-10 * s[:-1]):
        return Verdict.EXTINCT
    if np.min(s) > thresholds.eps_per:
        return Verdict.PERSIST
    return Verdict.UNDECIDED


def classify_long_time(
    r: Landscape,
    grid: Grid,
    u0: InitialDatum,
    horizon: float,
    thresholds: Thresholds = Thresholds(),
    *,
    d: float = 1.0,
    dt: float | None = None,
) -> Verdict:
    values = sample_on_grid(r, grid)
    traj = simulate(values, grid, initial_values(u0, grid), horizon, d=d, r_bar=r.sup_r, dt=dt)
    return classify_trajectory(traj, thresholds)


def decay_rate_estimate(traj: Trajectory) -> float:
    """Least-squares slope of ``log sup u`` over the second half of the run."""
    keep = traj.times >= 0.5 * traj.horizon
    t = traj.times[keep]
    y = np.log(np.maximum(traj.sup_u[keep], 1e-300))
    return float(np.polyfit(t, y, 1)[0])


# -- output -------------------------------------------------------------------


def write_frames_csv(path: str | Path, frame_times: Sequence[float], frames: Sequence[np.ndarray]) -> None:
    """One row per frame: ``t, rho_0, rho_1, ...``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        n = len(frames[0]) if frames else 0
        writer.writerow(["t"] + [f"rho_{i}" for i in range(n)])
        for t, rho in zip(frame_times, frames):
            writer.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in rho])


def write_u_dump(path: str | Path, u: np.ndarray) -> None:
    """Raw little-endian float64 in grid node order."""
    np.asarray(u, dtype="<f8").tofile(path)


def read_u_dump(path: str | Path) -> np.ndarray:
    return np.fromfile(path, dtype="<f8")
