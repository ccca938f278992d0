"""Command-line entry point.

Exit codes: 0 success, 1 experiment check failure or numerical failure,
2 configuration or usage error. Every failure also writes ``error.json``
into the output directory and prints the same JSON on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .config import Config, ConfigError, default_threads, load_config
from .experiments import (
    ExperimentFailure,
    RunRecord,
    run_dichotomy,
    run_eigen,
    run_monotonicity,
    run_simulation,
    run_truncation_study,
)

logger = logging.getLogger("phenokpp")

COMMANDS = ("eigen", "simulate", "dichotomy", "sweep", "truncation")

# sweep parameter each command needs (None: no sweep needed)
_REQUIRED_SWEEP = {
    "eigen": None,
    "simulate": None,
    "dichotomy": ("c",),
    "sweep": ("L", "d"),
    "truncation": ("R",),
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2) here
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="phenokpp", description="Principal eigenvalues and dynamics of the space/phenotype Fisher-KPP model.")
    p.add_argument("command", nargs="?", choices=COMMANDS, help="what to run for each experiment in the config")
    p.add_argument("--config", metavar="PATH", help="TOML experiment configuration")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
    p.add_argument("--threads", type=int, metavar="N", help="worker threads for parameter points")
    p.add_argument("--seed-check", action="store_true", help="run the built-in oracle checks")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def _emit_error(out_dir: Path | None, kind: str, message: str, code: int, **extra) -> int:
    payload = {"error": kind, "message": message, "exit_code": code, **extra}
    text = json.dumps(payload, indent=2, default=str)
    print(text, file=sys.stderr)
    if out_dir is not None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "error.json").write_text(text)
        except OSError:
            pass
    return code


def _validate(cfg: Config, command: str) -> None:
    need = _REQUIRED_SWEEP[command]
    for i, spec in enumerate(cfg.experiments):
        if need is None:
            continue
        if spec.sweep is None or spec.sweep.parameter not in need:
            raise ConfigError(f"command {command!r} needs a sweep over {' or '.join(need)}", f"experiment[{i}].sweep")
        if command == "dichotomy" and not spec.simulate:
            raise ConfigError("dichotomy needs simulate = true", f"experiment[{i}].simulate")


def _runner(command: str) -> Callable[..., RunRecord]:
    return {
        "eigen": lambda s, t, threads: run_eigen(s, t),
        "simulate": lambda s, t, threads: run_simulation(s, t),
        "dichotomy": lambda s, t, threads: run_dichotomy(s, t, threads=threads),
        "sweep": lambda s, t, threads: run_monotonicity(s, t, threads=threads),
        "truncation": lambda s, t, threads: run_truncation_study(s, t, threads=threads),
    }[command]


def _summary(command: str, record: RunRecord) -> str:
    if command == "eigen":
        return f"{record.name}: lambda = {record.points[0]['lambda']:.17g}"
    if command == "simulate":
        pt = record.points[0]
        return f"{record.name}: lambda = {pt['lambda']:.17g} verdict = {pt['verdict']}"
    status = "ok" if record.passed else "FAILED"
    return f"{record.name}: {command} {status} ({len(record.checks)} checks, {record.wall_time:.2f} s)"


def seed_check() -> list[tuple[str, bool, str]]:
    """Small oracle suite; returns ``(name, passed, detail)`` per check."""
    from .dynamics import simulate
    from .grid import Axis, assemble_operator, build_grid
    from .spectral import principal_eigenpair

    out = []
    g = build_grid([Axis(1.0, 32)], [Axis(1.0, 33, "neumann")])
    res = principal_eigenpair(assemble_operator(g, np.full(g.total_nodes, 0.5)), 0.5)
    out.append(("constant_eigenvalue", abs(res.lam - 0.5) <= 1e-9, f"lambda={res.lam:.17g}"))

    R = 2.0
    g = build_grid([Axis(2 * R, 63, "dirichlet", -R)], [Axis(1.0, 3, "neumann")])
    res = principal_eigenpair(assemble_operator(g, np.zeros(g.total_nodes)), 0.0)
    h = g.space_axes[0].spacing
    discrete = -4.0 / h**2 * np.sin(np.pi * h / (4 * R)) ** 2
    out.append(("dirichlet_window", abs(res.lam - discrete) <= 1e-9, f"lambda={res.lam:.17g} exact={discrete:.17g}"))

    gx = build_grid([Axis(1.0, 16)], [Axis(1.0, 3, "neumann")])
    gt = build_grid([Axis(1.0, 3)], [Axis(2.0, 17, "neumann", -1.0)])
    g = build_grid([Axis(1.0, 16)], [Axis(2.0, 17, "neumann", -1.0)])
    a = lambda x: 0.5 * np.cos(2 * np.pi * x[:, 0])
    b = lambda th: -th[:, 0] ** 2
    la = principal_eigenpair(assemble_operator(gx, a(gx.space_coords()))).lam
    lb = principal_eigenpair(assemble_operator(gt, b(gt.pheno_coords()))).lam
    lj = principal_eigenpair(assemble_operator(g, a(g.space_coords()) + b(g.pheno_coords()))).lam
    out.append(("separability", abs(lj - la - lb) <= 1e-8, f"joint={lj:.17g} sum={la + lb:.17g}"))

    g = build_grid([Axis(1.0, 4)], [Axis(1.0, 5, "neumann")])
    tr = simulate(np.ones(g.total_nodes), g, np.full(g.total_nodes, 0.1), 5.0, dt=1e-2)
    exact = 1.0 / (1.0 + 9.0 * np.exp(-5.0))
    err = abs(tr.final.rho.max() / exact - 1)
    out.append(("logistic", err <= 1e-3, f"relative error={err:.3e}"))
    return out


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        return _emit_error(None, "usage", str(exc), 2)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    out_dir = Path(args.out) if args.out else None
    if args.seed_check:
        results = seed_check()
        for name, ok, detail in results:
            print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        if all(ok for _, ok, _ in results):
            if args.command is None:
                return 0
        else:
            return _emit_error(out_dir, "seed_check", "oracle suite failed", 1, failed=[n for n, ok, _ in results if not ok])

    if args.command is None:
        parser.print_usage(sys.stderr)
        return _emit_error(out_dir, "usage", "a command is required", 2)
    if not args.config:
        parser.print_usage(sys.stderr)
        return _emit_error(out_dir, "usage", "--config is required", 2)

    try:
        cfg = load_config(args.config)
        _validate(cfg, args.command)
        threads = args.threads if args.threads is not None else cfg.threads
        if threads is None:
            threads = default_threads()
        if threads < 1:
            raise ConfigError("must be at least 1", "threads")
    except OSError as exc:
        return _emit_error(out_dir, "config", f"cannot read config: {exc}", 2)
    except ConfigError as exc:
        return _emit_error(out_dir, "config", str(exc), 2, key_path=exc.path)

    out_dir = out_dir or Path(cfg.out or "results")
    run = _runner(args.command)
    failed: list[dict] = []
    for spec in cfg.experiments:
        try:
            record = run(spec, cfg.tolerances, threads)
        except ExperimentFailure as exc:
            record = exc.record
            record.write(out_dir)
            print(_summary(args.command, record))
            failed.append({"experiment": record.name, "failures": record.failures()})
            continue
        except Exception as exc:  # numerical failure: report, keep going
            logger.debug("experiment %s crashed", spec.name, exc_info=True)
            failed.append({"experiment": spec.name, "exception": repr(exc), "traceback": traceback.format_exc()})
            continue
        record.write(out_dir)
        print(_summary(args.command, record))
    if failed:
        return _emit_error(out_dir, "experiment", f"{len(failed)} experiment(s) failed", 1, failures=failed)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
