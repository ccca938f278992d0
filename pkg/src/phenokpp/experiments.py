"""Experiment drivers: dichotomy maps, L/d sweeps and truncation studies."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .dynamics import (
    InitialDatum,
    Thresholds,
    Verdict,
    classify_trajectory,
    coth_monitor,
    decay_rate_estimate,
    initial_values,
    simulate,
)
from .grid import BC, assemble_operator
from .landscape import LandscapePreset, make_preset, sample_on_grid
from .spectral import (
    GridPolicy,
    ProblemKind,
    cell_grid,
    eigen_of_period,
    eigen_truncation_sequence,
    lambda_of_diffusivity,
    monotonicity_violations,
    principal_eigenpair,
    solve_landscape,
    write_curve_csv,
)

__all__ = [
    "Tolerances",
    "Sweep",
    "ExperimentSpec",
    "RunRecord",
    "ExperimentFailure",
    "run_eigen",
    "run_simulation",
    "run_dichotomy",
    "run_monotonicity",
    "run_truncation_study",
    "locate_threshold",
]

logger = logging.getLogger(__name__)

SWEEP_PARAMETERS = ("L", "d", "R", "c")


@dataclass(frozen=True)
class Tolerances:
    eps_mono: float = 1e-8
    delta: float = 0.05
    eps_ext: float = 1e-4
    eps_per: float = 1e-2
    tol_scaling: float = 1e-6
    tol_shift: float = 1e-10
    tol_seq: float = 1e-3
    tol_rate: float = 0.05
    tol_bound: float = 1e-6

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise ValueError(f"tolerance {f.name} must be a nonnegative number, got {v!r}")
            object.__setattr__(self, f.name, float(v))

    def thresholds(self) -> Thresholds:
        return Thresholds(eps_ext=self.eps_ext, eps_per=self.eps_per, delta=self.delta)


@dataclass(frozen=True)
class Sweep:
    parameter: str
    values: tuple[float, ...]
    relative: bool = False
    kinds: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.parameter not in SWEEP_PARAMETERS:
            raise ValueError(f"sweep parameter must be one of {SWEEP_PARAMETERS}, got {self.parameter!r}")
        values = tuple(float(v) for v in self.values)
        if not values:
            raise ValueError("sweep values must be non-empty")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("sweep values must be strictly increasing")
        if self.parameter in ("L", "d", "R") and values[0] <= 0:
            raise ValueError(f"sweep over {self.parameter} needs positive values")
        object.__setattr__(self, "values", values)
        kinds = tuple(ProblemKind(k).value for k in self.kinds)
        if kinds and self.parameter != "R":
            raise ValueError("sweep kinds only apply to R sweeps")
        if ProblemKind.PERIODIC_NEUMANN.value in kinds:
            raise ValueError("periodic_neumann is the truncation reference, not a truncation kind")
        object.__setattr__(self, "kinds", kinds)
        if self.relative and self.parameter != "c":
            raise ValueError("relative sweeps only apply to shift (c) sweeps")


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    landscape: LandscapePreset
    grid: GridPolicy = GridPolicy()
    sweep: Sweep | None = None
    simulate: bool = False
    horizon: float = 200.0
    d: float = 1.0
    dt: float | None = None
    initial: InitialDatum = InitialDatum()
    coth_radius: float | None = None
    coth_tau: float = 1.0

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("experiment name must be non-empty")
        if self.simulate and not self.horizon > 0:
            raise ValueError("horizon must be positive when simulate is set")
        if not self.d > 0:
            raise ValueError("d must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "name": self.name,
            "landscape": self.landscape.to_dict(),
            "grid": self.grid.to_dict(),
            "simulate": self.simulate,
            "horizon": self.horizon,
            "d": self.d,
            "initial": self.initial.to_dict(),
            "coth_tau": self.coth_tau,
        }
        if self.sweep is not None:
            out["sweep"] = {
                "parameter": self.sweep.parameter,
                "values": list(self.sweep.values),
                "relative": self.sweep.relative,
                "kinds": list(self.sweep.kinds),
            }
        if self.dt is not None:
            out["dt"] = self.dt
        if self.coth_radius is not None:
            out["coth_radius"] = self.coth_radius
        return out

    def spec_hash(self, tolerances: Tolerances | None = None) -> str:
        payload = {"spec": self.to_dict()}
        if tolerances is not None:
            payload["tolerances"] = asdict(tolerances)
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class RunRecord:
    name: str
    experiment: str
    spec_hash: str
    spec: dict
    tolerances: dict
    points: list[dict] = field(default_factory=list)
    checks: list[dict] = field(default_factory=list)
    curves: dict[str, list[list[float]]] = field(default_factory=dict)
    grids: list[dict] = field(default_factory=list)
    wall_time: float = 0.0
    version: str = __version__

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def check(self, name: str, passed: bool, **detail) -> bool:
        self.checks.append({"name": name, "passed": bool(passed), **detail})
        if not passed:
            logger.error("check %s failed: %s", name, detail)
        return bool(passed)

    def failures(self) -> list[dict]:
        return [c for c in self.checks if not c["passed"]]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "experiment": self.experiment,
            "spec_hash": self.spec_hash,
            "spec": self.spec,
            "tolerances": self.tolerances,
            "points": self.points,
            "checks": self.checks,
            "passed": self.passed,
            "curves": self.curves,
            "grids": self.grids,
            "wall_time": self.wall_time,
            "version": self.version,
        }

    def write(self, out_dir: str | Path) -> list[Path]:
        """Write ``<name>.json`` plus ``<name>_<curve>.csv`` per curve."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        path = out_dir / f"{self.name}.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, default=_json_default))
        written.append(path)
        for key, rows in self.curves.items():
            p = out_dir / f"{self.name}_{key}.csv"
            write_curve_csv(p, rows)
            written.append(p)
        return written


class ExperimentFailure(RuntimeError):
    def __init__(self, record: RunRecord):
        self.record = record
        names = ", ".join(c["name"] for c in record.failures())
        super().__init__(f"experiment {record.name!r} failed checks: {names}")


def _json_default(obj):
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj)}")


def _pool_map(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _new_record(spec: ExperimentSpec, kind: str, tol: Tolerances) -> RunRecord:
    return RunRecord(
        name=spec.name,
        experiment=kind,
        spec_hash=spec.spec_hash(tol),
        spec=spec.to_dict(),
        tolerances=asdict(tol),
    )


def _finish(record: RunRecord, t0: float, raise_on_failure: bool) -> RunRecord:
    record.wall_time = time.perf_counter() - t0
    if raise_on_failure and not record.passed:
        raise ExperimentFailure(record)
    return record


def run_eigen(spec: ExperimentSpec, tol: Tolerances = Tolerances(), *, raise_on_failure: bool = True) -> RunRecord:
    t0 = time.perf_counter()
    record = _new_record(spec, "eigen", tol)
    r = make_preset(spec.landscape)
    grid = cell_grid(r, spec.grid)
    res = solve_landscape(r, grid, spec.d)
    record.grids.append(grid.describe())
    record.points.append(
        {"lambda": res.lam, "residual": res.residual, "iterations": res.iterations, "nodes": res.nodes, "sup_r": r.sup_r}
    )
    record.check("eigen_residual", res.residual <= 1e-10 * (abs(res.lam) + 1), residual=res.residual)
    record.check("rayleigh_bound", res.lam <= r.sup_r + tol.eps_mono, lam=res.lam, sup_r=r.sup_r)
    return _finish(record, t0, raise_on_failure)


def _simulate_point(spec: ExperimentSpec, r, grid, shift: float, tol: Tolerances) -> dict:
    values = sample_on_grid(r, grid) + shift
    u0 = initial_values(spec.initial, grid)
    traj = simulate(
        values,
        grid,
        u0,
        spec.horizon,
        d=spec.d,
        r_bar=r.sup_r + shift,
        dt=spec.dt,
        coth_radius=spec.coth_radius,
    )
    verdict = classify_trajectory(traj, tol.thresholds())
    out = {
        "verdict": verdict.value,
        "final_sup_rho": float(traj.sup_rho[-1]),
        "max_bound_ratio": traj.monitors.max_bound_ratio,
        "bound_trips": traj.monitors.bound_trips,
        "dt": traj.dt,
        "steps": len(traj.times) - 1,
    }
    if verdict is Verdict.EXTINCT:
        out["decay_rate"] = decay_rate_estimate(traj)
    if spec.coth_radius is not None:
        rep = coth_monitor(traj, spec.coth_tau)
        out["coth_checks"] = rep.checks
        out["coth_max_violation"] = rep.max_violation
    return out


def run_simulation(spec: ExperimentSpec, tol: Tolerances = Tolerances(), *, raise_on_failure: bool = True) -> RunRecord:
    t0 = time.perf_counter()
    record = _new_record(spec, "simulate", tol)
    r = make_preset(spec.landscape)
    grid = cell_grid(r, spec.grid)
    record.grids.append(grid.describe())
    eig = solve_landscape(r, grid, spec.d)
    point = {"lambda": eig.lam, **_simulate_point(spec, r, grid, 0.0, tol)}
    record.points.append(point)
    _point_checks(record, point, tol)
    return _finish(record, t0, raise_on_failure)


def _point_checks(record: RunRecord, point: dict, tol: Tolerances) -> None:
    lam, verdict = point["lambda"], point["verdict"]
    tag = f"c={point['c']:.6g}" if "c" in point else "point"
    if lam < -tol.delta:
        record.check(f"extinct[{tag}]", verdict == Verdict.EXTINCT.value, lam=lam, verdict=verdict)
    elif lam > tol.delta:
        record.check(f"persist[{tag}]", verdict == Verdict.PERSIST.value, lam=lam, verdict=verdict)
    if "decay_rate" in point:
        record.check(
            f"decay_rate[{tag}]", point["decay_rate"] <= lam + tol.tol_rate, rate=point["decay_rate"], lam=lam
        )
    record.check(f"apriori_bound[{tag}]", point["max_bound_ratio"] <= 1.0 + tol.tol_bound, ratio=point["max_bound_ratio"])
    if "coth_max_violation" in point:
        record.check(f"coth_bound[{tag}]", point["coth_max_violation"] <= tol.tol_bound, excess=point["coth_max_violation"])


def locate_threshold(lam_base: float) -> float:
    """Shift ``c*`` with ``lambda(r + c*) = 0``; exact by the diagonal-shift identity."""
    return -lam_base


def run_dichotomy(
    spec: ExperimentSpec, tol: Tolerances = Tolerances(), *, threads: int = 1, raise_on_failure: bool = True
) -> RunRecord:
    """Eigenvalue and long-time verdict for each shift ``r + c``.

    Relative sweeps place the shifts at ``c* + value`` where ``c*`` is the
    zero of ``lambda(r + c)``.
    """
    if spec.sweep is None or spec.sweep.parameter != "c":
        raise ValueError("dichotomy needs a sweep over the shift c")
    t0 = time.perf_counter()
    record = _new_record(spec, "dichotomy", tol)
    r = make_preset(spec.landscape)
    grid = cell_grid(r, spec.grid)
    record.grids.append(grid.describe())
    op = assemble_operator(grid, sample_on_grid(r, grid), spec.d)
    base = principal_eigenpair(op, r.sup_r)
    c_star = locate_threshold(base.lam)
    shifts = [c_star + v if spec.sweep.relative else v for v in spec.sweep.values]
    record.points.append({"c": 0.0, "lambda": base.lam, "c_star": c_star, "role": "base"})

    def one(c: float) -> dict:
        eig = principal_eigenpair(op.with_shift(c), r.sup_r + c)
        point = {
            "c": c,
            "lambda": eig.lam,
            "shift_identity_error": abs(eig.lam - base.lam - c),
            "residual": eig.residual,
            "iterations": eig.iterations,
            "nodes": eig.nodes,
        }
        if spec.simulate:
            point.update(_simulate_point(spec, r, grid, c, tol))
        return point

    for point in _pool_map(one, shifts, threads):
        record.points.append(point)
        record.curves.setdefault("lambda_vs_c", []).append(
            [point["c"], point["lambda"], point["residual"], point["iterations"], point["nodes"]]
        )
        record.check(
            f"shift_identity[c={point['c']:.6g}]",
            point["shift_identity_error"] <= tol.tol_shift,
            error=point["shift_identity_error"],
        )
        if spec.simulate:
            _point_checks(record, point, tol)
    return _finish(record, t0, raise_on_failure)


def run_monotonicity(
    spec: ExperimentSpec, tol: Tolerances = Tolerances(), *, threads: int = 1, raise_on_failure: bool = True
) -> RunRecord:
    """lambda along an L sweep (nondecreasing) or a d sweep (nonincreasing)."""
    if spec.sweep is None or spec.sweep.parameter not in ("L", "d"):
        raise ValueError("monotonicity needs a sweep over L or d")
    t0 = time.perf_counter()
    param = spec.sweep.parameter
    record = _new_record(spec, f"sweep_{param}", tol)
    r = make_preset(spec.landscape)
    values = list(spec.sweep.values)

    if param == "L":
        results = _pool_map(lambda L: eigen_of_period(r, L, spec.grid, d=spec.d), values, threads)
        lams = [res.lam for res in results]
        for L, res in zip(values, results):
            record.points.append({"L": L, "lambda": res.lam, "residual": res.residual, "iterations": res.iterations, "nodes": res.nodes})
        rows = [[L, res.lam, res.residual, res.iterations, res.nodes] for L, res in zip(values, results)]
        bad = monotonicity_violations(values, lams, increasing=True, eps=tol.eps_mono)
        record.check("nondecreasing_in_L", not bad, violations=bad)
    else:
        results = _pool_map(lambda d: lambda_of_diffusivity(r, d, spec.grid), values, threads)
        lams = [res.lam for res in results]
        for d, res in zip(values, results):
            record.points.append(
                {
                    "d": d,
                    "lambda": res.lam,
                    "lambda_scaled": res.scaled.lam,
                    "scaling_residual": res.scaling_residual,
                    "residual": res.direct.residual,
                    "iterations": res.direct.iterations,
                    "nodes": res.direct.nodes,
                }
            )
        rows = [[d, res.lam, res.direct.residual, res.direct.iterations, res.direct.nodes] for d, res in zip(values, results)]
        bad = monotonicity_violations(values, lams, increasing=False, eps=tol.eps_mono)
        record.check("nonincreasing_in_d", not bad, violations=bad)
        worst = max(res.scaling_residual for res in results)
        record.check("scaling_identity", worst <= tol.tol_scaling, max_residual=worst)
    record.curves[f"lambda_vs_{param}"] = rows
    return _finish(record, t0, raise_on_failure)


def reference_policy(policy: GridPolicy, R_max: float) -> GridPolicy:
    """Neumann box of half-width ``R_max`` at the phenotype spacing of ``policy``."""
    h = policy.pheno_spacing
    m = 2.0 * R_max / h
    k = int(round(m))
    if abs(m - k) > 1e-9 * max(1.0, m):
        raise ValueError(f"R_max={R_max} is not a multiple of half the phenotype spacing {h}")
    return GridPolicy(policy.space_nodes, R_max, k + 1, BC.NEUMANN)


def run_truncation_study(
    spec: ExperimentSpec, tol: Tolerances = Tolerances(), *, threads: int = 1, raise_on_failure: bool = True
) -> RunRecord:
    """Truncated eigenvalue curves against the periodic x Neumann reference.

    The reference uses the phenotype box ``[-R_max, R_max]^P`` at the same
    spacing; the mixed problem uses that same box.
    """
    if spec.sweep is None or spec.sweep.parameter != "R":
        raise ValueError("truncation study needs a sweep over R")
    t0 = time.perf_counter()
    record = _new_record(spec, "truncation", tol)
    r = make_preset(spec.landscape)
    radii = list(spec.sweep.values)
    kinds = spec.sweep.kinds or tuple(
        k.value for k in (ProblemKind.PERIODIC_DIRICHLET_THETA, ProblemKind.DIRICHLET_BALL, ProblemKind.MIXED)
    )
    policy = reference_policy(spec.grid, radii[-1])
    ref_grid = cell_grid(r, policy)
    ref = solve_landscape(r, ref_grid, spec.d)
    record.grids.append(ref_grid.describe())
    record.points.append({"kind": "reference", "lambda": ref.lam, "residual": ref.residual, "nodes": ref.nodes})

    curves = _pool_map(
        lambda k: eigen_truncation_sequence(r, k, radii, policy, tol_seq=tol.tol_seq, eps_mono=tol.eps_mono, d=spec.d),
        list(kinds),
        threads,
    )
    for kind, curve in zip(kinds, curves):
        gaps = [ref.lam - lam for lam in curve.lambdas]
        record.points.append(
            {
                "kind": kind,
                "radii": curve.radii,
                "lambdas": curve.lambdas,
                "gaps": gaps,
                "final_gap": gaps[-1],
                "converged": curve.converged,
                "extrapolated": curve.extrapolated,
            }
        )
        record.curves[kind] = [list(row) for row in curve.rows()]
        record.check(f"nondecreasing[{kind}]", curve.is_monotone, violations=curve.violations)
        excess = max(lam - ref.lam for lam in curve.lambdas)
        record.check(f"below_reference[{kind}]", excess <= tol.eps_mono, excess=excess)
        if len(gaps) > 1:
            record.check(f"gap_shrinks[{kind}]", gaps[-1] < gaps[0], first=gaps[0], last=gaps[-1])
    return _finish(record, t0, raise_on_failure)
