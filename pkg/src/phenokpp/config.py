"""
Strict TOML configuration.

Layout::

    out = "results"            # optional
    threads = 1                # optional

    [tolerances]               # optional; any subset of Tolerances fields
    eps_mono = 1e-8

    [[experiment]]
    name = "checkerboard-L"
    d = 1.0                    # optional keys: simulate, horizon, dt,
                               # coth_radius, coth_tau
    [experiment.landscape]
    kind = "checkerboard"      # plus space_dim, pheno_dim, shift_c
    params = { r0 = 1.0, kappa = 1.0 }
    [experiment.grid]          # GridPolicy fields
    space_nodes = 32
    [experiment.sweep]
    parameter = "L"            # L | d | R | c
    values = [0.5, 1.0, 2.0]   # plus relative (c only), kinds (R only)
    [experiment.initial]
    kind = "constant_patch"
    params = { amplitude = 1.0 }

Unknown keys anywhere are errors.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, fields
from typing import Any

import tomli
import tomli_w

from .dynamics import InitialDatum
from .experiments import ExperimentSpec, Sweep, Tolerances
from .landscape import LandscapePreset
from .spectral import GridPolicy

__all__ = ["Config", "ConfigError", "parse_config", "serialize_config", "load_config", "default_threads"]

THREADS_ENV = "PHENOKPP_THREADS"


class ConfigError(ValueError):
    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be at least 1")
    return n


@dataclass(frozen=True)
class Config:
    experiments: tuple[ExperimentSpec, ...]
    out: str | None = None
    tolerances: Tolerances = Tolerances()
    threads: int | None = None

    def experiment(self, name: str) -> ExperimentSpec:
        for e in self.experiments:
            if e.name == name:
                return e
        raise KeyError(name)


def _table(value: Any, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError("expected a table", path)
    return value


def _strict(table: dict, allowed: set[str], path: str) -> None:
    for key in table:
        if key not in allowed:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown key {key!r}", where)


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", path)
    if not math.isfinite(value):
        raise ConfigError("expected a finite number", path)
    return float(value)


def _int(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"expected an integer, got {value!r}", path)
    return value


def _bool(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"expected true or false, got {value!r}", path)
    return value


def _str(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"expected a string, got {value!r}", path)
    return value


def _build(cls, kwargs: dict, path: str):
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc), path) from None


def _params(value: Any, path: str) -> dict[str, float]:
    return {k: _number(v, f"{path}.{k}") for k, v in _table(value, path).items()}


def _landscape(raw: Any, path: str) -> LandscapePreset:
    t = _table(raw, path)
    _strict(t, {"kind", "params", "space_dim", "pheno_dim", "shift_c"}, path)
    if "kind" not in t:
        raise ConfigError("missing key 'kind'", path)
    kwargs: dict[str, Any] = {"kind": _str(t["kind"], f"{path}.kind")}
    if "params" in t:
        kwargs["params"] = _params(t["params"], f"{path}.params")
    for key in ("space_dim", "pheno_dim"):
        if key in t:
            kwargs[key] = _int(t[key], f"{path}.{key}")
    if "shift_c" in t:
        kwargs["shift_c"] = _number(t["shift_c"], f"{path}.shift_c")
    return _build(LandscapePreset, kwargs, path)


def _grid(raw: Any, path: str) -> GridPolicy:
    t = _table(raw, path)
    _strict(t, {"space_nodes", "pheno_halfwidth", "pheno_nodes", "pheno_bc"}, path)
    kwargs: dict[str, Any] = {}
    for key in ("space_nodes", "pheno_nodes"):
        if key in t:
            kwargs[key] = _int(t[key], f"{path}.{key}")
    if "pheno_halfwidth" in t:
        kwargs["pheno_halfwidth"] = _number(t["pheno_halfwidth"], f"{path}.pheno_halfwidth")
    if "pheno_bc" in t:
        kwargs["pheno_bc"] = _str(t["pheno_bc"], f"{path}.pheno_bc")
    return _build(GridPolicy, kwargs, path)


def _sweep(raw: Any, path: str) -> Sweep:
    t = _table(raw, path)
    _strict(t, {"parameter", "values", "relative", "kinds"}, path)
    for key in ("parameter", "values"):
        if key not in t:
            raise ConfigError(f"missing key {key!r}", path)
    if not isinstance(t["values"], list):
        raise ConfigError("expected a list", f"{path}.values")
    kwargs: dict[str, Any] = {
        "parameter": _str(t["parameter"], f"{path}.parameter"),
        "values": tuple(_number(v, f"{path}.values[{i}]") for i, v in enumerate(t["values"])),
    }
    if "relative" in t:
        kwargs["relative"] = _bool(t["relative"], f"{path}.relative")
    if "kinds" in t:
        if not isinstance(t["kinds"], list):
            raise ConfigError("expected a list", f"{path}.kinds")
        kwargs["kinds"] = tuple(_str(k, f"{path}.kinds[{i}]") for i, k in enumerate(t["kinds"]))
    return _build(Sweep, kwargs, path)


def _initial(raw: Any, path: str) -> InitialDatum:
    t = _table(raw, path)
    _strict(t, {"kind", "params"}, path)
    kwargs: dict[str, Any] = {}
    if "kind" in t:
        kind = _str(t["kind"], f"{path}.kind")
        if kind == "custom":
            raise ConfigError("custom initial data cannot be given in a config file", f"{path}.kind")
        kwargs["kind"] = kind
    if "params" in t:
        kwargs["params"] = _params(t["params"], f"{path}.params")
    return _build(InitialDatum, kwargs, path)


_EXPERIMENT_KEYS = {
    "name", "landscape", "grid", "sweep", "simulate", "horizon", "d", "dt", "initial", "coth_radius", "coth_tau",
}


def _experiment(raw: Any, path: str) -> ExperimentSpec:
    t = _table(raw, path)
    _strict(t, _EXPERIMENT_KEYS, path)
    for key in ("name", "landscape"):
        if key not in t:
            raise ConfigError(f"missing key {key!r}", path)
    kwargs: dict[str, Any] = {
        "name": _str(t["name"], f"{path}.name"),
        "landscape": _landscape(t["landscape"], f"{path}.landscape"),
    }
    if "grid" in t:
        kwargs["grid"] = _grid(t["grid"], f"{path}.grid")
    if "sweep" in t:
        kwargs["sweep"] = _sweep(t["sweep"], f"{path}.sweep")
    if "initial" in t:
        kwargs["initial"] = _initial(t["initial"], f"{path}.initial")
    if "simulate" in t:
        kwargs["simulate"] = _bool(t["simulate"], f"{path}.simulate")
    for key in ("horizon", "d", "dt", "coth_radius", "coth_tau"):
        if key in t:
            kwargs[key] = _number(t[key], f"{path}.{key}")
    return _build(ExperimentSpec, kwargs, path)


def parse_config(text: str) -> Config:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        # message carries "(at line L, column C)"
        raise ConfigError(f"syntax error: {exc}") from None
    _strict(raw, {"out", "threads", "tolerances", "experiment"}, "")
    kwargs: dict[str, Any] = {}
    if "out" in raw:
        kwargs["out"] = _str(raw["out"], "out")
    if "threads" in raw:
        n = _int(raw["threads"], "threads")
        if n < 1:
            raise ConfigError("must be at least 1", "threads")
        kwargs["threads"] = n
    if "tolerances" in raw:
        t = _table(raw["tolerances"], "tolerances")
        _strict(t, {f.name for f in fields(Tolerances)}, "tolerances")
        kwargs["tolerances"] = _build(
            Tolerances, {k: _number(v, f"tolerances.{k}") for k, v in t.items()}, "tolerances"
        )
    exps = raw.get("experiment", [])
    if not isinstance(exps, list) or not exps:
        raise ConfigError("at least one [[experiment]] table is required", "experiment")
    specs = tuple(_experiment(e, f"experiment[{i}]") for i, e in enumerate(exps))
    names = [s.name for s in specs]
    dup = {n for n in names if names.count(n) > 1}
    if dup:
        raise ConfigError(f"duplicate experiment names {sorted(dup)}", "experiment")
    return Config(experiments=specs, **kwargs)


def load_config(path: str | os.PathLike) -> Config:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _experiment_table(spec: ExperimentSpec) -> dict:
    d = spec.to_dict()
    out: dict[str, Any] = {"name": d["name"], "simulate": d["simulate"], "horizon": d["horizon"], "d": d["d"]}
    for key in ("dt", "coth_radius"):
        if key in d:
            out[key] = d[key]
    out["coth_tau"] = d["coth_tau"]
    out["landscape"] = d["landscape"]
    out["grid"] = d["grid"]
    out["initial"] = d["initial"]
    if "sweep" in d:
        out["sweep"] = d["sweep"]
    return out


def serialize_config(cfg: Config) -> str:
    doc: dict[str, Any] = {}
    if cfg.out is not None:
        doc["out"] = cfg.out
    if cfg.threads is not None:
        doc["threads"] = cfg.threads
    doc["tolerances"] = asdict(cfg.tolerances)
    doc["experiment"] = [_experiment_table(e) for e in cfg.experiments]
    return tomli_w.dumps(doc)
