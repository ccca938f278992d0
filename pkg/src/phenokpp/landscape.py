"""Fitness landscapes r(x, theta), periodic in x."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .grid import BC, Grid

__all__ = [
    "Landscape",
    "LandscapePreset",
    "PresetKind",
    "make_preset",
    "make_separable",
    "rescale_period",
    "sample_on_grid",
    "estimate_sup",
    "check_periodicity",
    "check_tail",
]

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class Landscape:
    """A fitness field.

    ``eval(x, theta)`` takes arrays of shape ``(..., N)`` and ``(..., P)``
    and returns shape ``(...)``. ``tail_radius`` (when set) is a radius M
    with ``r <= 0`` wherever ``|theta| >= M``.
    """

    eval: Evaluator
    space_dim: int
    pheno_dim: int
    period: tuple[float, ...]
    sup_r: float
    tail_radius: float | None = None
    name: str = "custom"
    pheno_window: float = 2.0

    def __call__(self, x, theta) -> np.ndarray:
        return self.eval(np.asarray(x, dtype=np.float64), np.asarray(theta, dtype=np.float64))


class PresetKind(str, enum.Enum):
    CHECKERBOARD = "checkerboard"
    ENV_GRADIENT = "env_gradient"
    CONFINED_ZONE = "confined_zone"
    CONSTANT = "constant"
    SEPARABLE = "separable"


# allowed parameter names and defaults (None marks a required parameter)
PRESET_PARAMS: dict[PresetKind, dict[str, float | None]] = {
    PresetKind.CONSTANT: {"c": None},
    PresetKind.SEPARABLE: {"a_amp": 0.0, "b0": 0.0, "b_curv": 0.0},
    PresetKind.ENV_GRADIENT: {"B": None, "r0": 1.0},
    PresetKind.CONFINED_ZONE: {"r0": 1.0, "r1": 1.0, "radius": 0.25},
    PresetKind.CHECKERBOARD: {"r0": 1.0, "kappa": 0.0, "shift": 0.0},
}


@dataclass(frozen=True)
class LandscapePreset:
    kind: PresetKind
    params: Mapping[str, float] = field(default_factory=dict)
    space_dim: int = 1
    pheno_dim: int = 1
    shift_c: float = 0.0

    def __post_init__(self) -> None:
        try:
            kind = PresetKind(self.kind)
        except ValueError:
            raise ValueError(
                f"unknown landscape kind {self.kind!r}; expected one of {[k.value for k in PresetKind]}"
            ) from None
        object.__setattr__(self, "kind", kind)
        allowed = PRESET_PARAMS[kind]
        unknown = set(self.params) - set(allowed)
        if unknown:
            raise ValueError(f"unknown parameter(s) {sorted(unknown)} for landscape {kind.value}")
        full = {}
        for key, default in allowed.items():
            value = self.params.get(key, default)
            if value is None:
                raise ValueError(f"landscape {kind.value} requires parameter {key!r}")
            value = float(value)
            if not math.isfinite(value):
                raise ValueError(f"landscape parameter {key!r} must be finite")
            full[key] = value
        object.__setattr__(self, "params", full)
        if self.space_dim not in (1, 2) or self.pheno_dim not in (1, 2):
            raise ValueError("space_dim and pheno_dim must be 1 or 2")
        if kind is PresetKind.ENV_GRADIENT and full["B"] <= 0:
            raise ValueError("env_gradient requires B > 0")
        if kind is PresetKind.CONFINED_ZONE and (full["radius"] <= 0 or full["r1"] < 0):
            raise ValueError("confined_zone requires radius > 0 and r1 >= 0")
        if kind is PresetKind.SEPARABLE and full["b_curv"] < 0:
            raise ValueError("separable requires b_curv >= 0 so r is bounded above")
        if kind is PresetKind.CHECKERBOARD and full["kappa"] < 0:
            raise ValueError("checkerboard requires kappa >= 0")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "params": dict(self.params),
            "space_dim": self.space_dim,
            "pheno_dim": self.pheno_dim,
            "shift_c": self.shift_c,
        }


def _centered(x: np.ndarray) -> np.ndarray:
    """Image of x in the unit cell [-1/2, 1/2)."""
    return np.mod(x + 0.5, 1.0) - 0.5


def _half_sign(x: np.ndarray) -> np.ndarray:
    """Checkerboard sign: +1 on the first half of each unit cell, product over axes."""
    s = np.where(np.mod(x, 1.0) < 0.5, 1.0, -1.0)
    return np.prod(s, axis=-1)


def estimate_sup(
    fn: Evaluator,
    space_dim: int,
    pheno_dim: int,
    period: tuple[float, ...],
    pheno_window: float,
    per_axis: int = 64,
) -> float:
    """Dense-sample maximum over one cell times ``[-w, w]^P``."""
    axes = [np.linspace(0.0, p, per_axis, endpoint=False) for p in period]
    axes += [np.linspace(-pheno_window, pheno_window, per_axis + 1)] * pheno_dim
    mesh = np.meshgrid(*axes, indexing="ij")
    x = np.stack(mesh[:space_dim], axis=-1).reshape(-1, space_dim)
    th = np.stack(mesh[space_dim:], axis=-1).reshape(-1, pheno_dim)
    return float(np.max(fn(x, th)))


def _finish(fn, space_dim, pheno_dim, *, analytic_sup, tail, name, window=2.0) -> Landscape:
    period = (1.0,) * space_dim
    sampled = estimate_sup(fn, space_dim, pheno_dim, period, window)
    sup_r = sampled if analytic_sup is None else max(sampled, analytic_sup)
    return Landscape(fn, space_dim, pheno_dim, period, sup_r, tail, name, window)


def make_preset(preset: LandscapePreset) -> Landscape:
    """Build the landscape for a preset (plus its constant shift ``shift_c``)."""
    p, N, P = preset.params, preset.space_dim, preset.pheno_dim
    c_shift = preset.shift_c
    kind = preset.kind

    if kind is PresetKind.CONSTANT:
        c = p["c"] + c_shift

        def fn(x, th):
            return np.full(np.shape(x)[:-1], c)

        return _finish(fn, N, P, analytic_sup=c, tail=None if c > 0 else 0.0, name=kind.value)

    if kind is PresetKind.SEPARABLE:
        a_amp, b0, b_curv = p["a_amp"], p["b0"], p["b_curv"]

        def fn(x, th):
            a = a_amp * np.sum(np.cos(2.0 * np.pi * x), axis=-1)
            b = b0 - b_curv * np.sum(th**2, axis=-1)
            return a + b + c_shift

        sup = N * abs(a_amp) + b0 + c_shift
        tail = None
        if b_curv > 0:
            tail = math.sqrt(max(sup, 0.0) / b_curv)
        return _finish(fn, N, P, analytic_sup=sup, tail=tail, name=kind.value)

    if kind is PresetKind.ENV_GRADIENT:
        B, r0 = p["B"], p["r0"]
        k = min(N, P)

        def fn(x, th):
            xc = _centered(x)
            y = xc[..., :k] - B * th[..., :k]
            val = r0 - np.sum(y**2, axis=-1)
            if P > k:
                val = val - np.sum(th[..., k:] ** 2, axis=-1)
            return val + c_shift

        top = r0 + c_shift
        # |x_c| <= sqrt(N)/2, so r <= 0 once min(B, 1)|theta| >= sqrt(top) + sqrt(N)/2
        tail = (math.sqrt(max(top, 0.0)) + 0.5 * math.sqrt(N)) / min(B, 1.0)
        return _finish(fn, N, P, analytic_sup=top, tail=tail, name=kind.value, window=max(2.0, tail))

    if kind is PresetKind.CONFINED_ZONE:
        r0, r1, radius = p["r0"], p["r1"], p["radius"]

        def fn(x, th):
            dist2 = np.sum(_centered(x) ** 2, axis=-1) + np.sum(th**2, axis=-1)
            return np.where(dist2 <= radius**2, r0, -r1) + c_shift

        top = max(r0, -r1) + c_shift
        tail = radius if -r1 + c_shift <= 0 else None
        return _finish(fn, N, P, analytic_sup=top, tail=tail, name=kind.value)

    if kind is PresetKind.CHECKERBOARD:
        r0, kappa, shift = p["r0"], p["kappa"], p["shift"]

        def fn(x, th):
            s = _half_sign(x)
            opt = shift * s
            return r0 * s - kappa * np.sum((th - opt[..., None]) ** 2, axis=-1) + c_shift

        top = abs(r0) + c_shift
        tail = None
        if kappa > 0:
            tail = math.sqrt(P) * abs(shift) + math.sqrt(max(top, 0.0) / kappa)
        return _finish(fn, N, P, analytic_sup=top, tail=tail, name=kind.value)

    raise AssertionError(kind)  # pragma: no cover


def make_separable(
    a: Callable[[np.ndarray], np.ndarray],
    b: Callable[[np.ndarray], np.ndarray],
    space_dim: int = 1,
    pheno_dim: int = 1,
    pheno_window: float = 2.0,
) -> Landscape:
    """``r(x, theta) = a(x) + b(theta)`` from vectorised callables.

    ``a`` must be 1-periodic in every spatial coordinate.
    """

    def fn(x, th):
        return np.asarray(a(x), dtype=np.float64) + np.asarray(b(th), dtype=np.float64)

    period = (1.0,) * space_dim
    sup = estimate_sup(fn, space_dim, pheno_dim, period, pheno_window)
    return Landscape(fn, space_dim, pheno_dim, period, sup, None, "separable", pheno_window)


def rescale_period(r: Landscape, L: float) -> Landscape:
    """The landscape ``r(x / L, theta)`` with period ``L * period``."""
    if not (math.isfinite(L) and L > 0):
        raise ValueError(f"period scale must be positive, got {L}")
    if L == 1.0:
        return r
    inner = r.eval

    def fn(x, th):
        return inner(x / L, th)

    return Landscape(
        fn,
        r.space_dim,
        r.pheno_dim,
        tuple(L * p for p in r.period),
        r.sup_r,
        r.tail_radius,
        f"{r.name}^L={L:g}",
        r.pheno_window,
    )


def sample_on_grid(r: Landscape, grid: Grid, offset: np.ndarray | float | None = None) -> np.ndarray:
    """Values of r at every grid node.

    ``offset`` is added to the spatial coordinates. Periodic spatial axes must
    span exactly one landscape period.
    """
    if grid.space_dim != r.space_dim or grid.pheno_dim != r.pheno_dim:
        raise ValueError(
            f"grid dims (N={grid.space_dim}, P={grid.pheno_dim}) do not match landscape "
            f"(N={r.space_dim}, P={r.pheno_dim})"
        )
    for axis, period in zip(grid.space_axes, r.period):
        if axis.bc is BC.PERIODIC and not math.isclose(axis.length, period, rel_tol=1e-12, abs_tol=0.0):
            raise ValueError(f"periodic axis length {axis.length} does not match landscape period {period}")
    x = grid.space_coords()
    if offset is not None:
        x = x + np.broadcast_to(np.asarray(offset, dtype=np.float64), (r.space_dim,))
    values = np.asarray(r.eval(x, grid.pheno_coords()), dtype=np.float64)
    return np.ascontiguousarray(np.broadcast_to(values, (grid.total_nodes,)))


def check_periodicity(r: Landscape, n_samples: int = 1000, seed: int = 0) -> float:
    """Largest |r(x + k*period, theta) - r(x, theta)| over random samples."""
    rng = np.random.default_rng(seed)
    period = np.asarray(r.period)
    x = rng.uniform(0.0, 1.0, (n_samples, r.space_dim)) * period
    th = rng.uniform(-r.pheno_window, r.pheno_window, (n_samples, r.pheno_dim))
    k = rng.integers(-3, 4, (n_samples, r.space_dim))
    return float(np.max(np.abs(r.eval(x + k * period, th) - r.eval(x, th))))


def check_tail(r: Landscape, n_samples: int = 1000, seed: int = 0) -> float:
    """Largest r sampled on ``|theta| >= tail_radius`` (should be <= 0)."""
    if r.tail_radius is None:
        raise ValueError("landscape has no tail radius")
    rng = np.random.default_rng(seed)
    period = np.asarray(r.period)
    x = rng.uniform(0.0, 1.0, (n_samples, r.space_dim)) * period
    direction = rng.normal(size=(n_samples, r.pheno_dim))
    direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
    radius = r.tail_radius * (1.0 + rng.exponential(1.0, (n_samples, 1)))
    return float(np.max(r.eval(x, direction * radius)))
