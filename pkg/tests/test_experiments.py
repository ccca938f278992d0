import json
from importlib import resources

import jsonschema
import pytest

from phenokpp.config import ConfigError, default_threads, load_config, parse_config, serialize_config
from phenokpp.dynamics import InitialDatum
from phenokpp.experiments import (
    ExperimentFailure,
    ExperimentSpec,
    Sweep,
    Tolerances,
    run_dichotomy,
    run_eigen,
    run_monotonicity,
    run_simulation,
    run_truncation_study,
)
from phenokpp.landscape import LandscapePreset
from phenokpp.spectral import GridPolicy

CONFIGS = resources.files("phenokpp") / "configs"
SCHEMA = json.loads((resources.files("phenokpp") / "schemas" / "run_record.schema.json").read_text())

CHECKER = LandscapePreset("checkerboard", {"r0": 1.0, "kappa": 1.0, "shift": 0.5})
SMALL = GridPolicy(space_nodes=16, pheno_nodes=9)

MINIMAL = """
[[experiment]]
name = "c"
[experiment.landscape]
kind = "constant"
params = { c = 0.5 }
"""


def validate(record, tmp_path):
    paths = record.write(tmp_path)
    doc = json.loads(paths[0].read_text())
    jsonschema.validate(doc, SCHEMA)
    return doc, paths


# -- config ------------------------------------------------------------------


def test_minimal_config():
    cfg = parse_config(MINIMAL)
    assert cfg.experiments[0].landscape.params == {"c": 0.5}
    assert cfg.tolerances == Tolerances()


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.iterdir() if p.name.endswith(".toml")))
def test_bundled_configs_roundtrip(name):
    cfg = load_config(CONFIGS / name)
    again = parse_config(serialize_config(cfg))
    assert again == cfg


def test_unknown_key_named():
    text = MINIMAL.replace('name = "c"', 'name = "c"\ndiffusionn = 2.0')
    with pytest.raises(ConfigError, match="diffusionn") as exc:
        parse_config(text)
    assert exc.value.path == "experiment[0].diffusionn"


def test_nested_unknown_key_path():
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL + "[experiment.grid]\nspace_nodez = 4\n")
    assert exc.value.path == "experiment[0].grid.space_nodez"


def test_syntax_error_has_line():
    with pytest.raises(ConfigError, match=r"line 3"):
        parse_config('out = "x"\n\nthreads = = 2\n')


@pytest.mark.parametrize(
    "text, path",
    [
        (MINIMAL.replace("c = 0.5", "c = true"), "experiment[0].landscape.params.c"),
        (MINIMAL.replace('"constant"', '"volcano"'), "experiment[0].landscape"),
        ("threads = 0\n" + MINIMAL, "threads"),
        ('out = "x"\n', "experiment"),
        (MINIMAL + MINIMAL, "experiment"),
        (MINIMAL + '[experiment.sweep]\nparameter = "L"\nvalues = [2.0, 1.0]\n', "experiment[0].sweep"),
        ("[tolerances]\neps_mono = -1.0\n" + MINIMAL, "tolerances"),
    ],
)
def test_semantic_errors_carry_key_path(text, path):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.path == path


def test_threads_env(monkeypatch):
    monkeypatch.setenv("PHENOKPP_THREADS", "3")
    assert default_threads() == 3
    monkeypatch.setenv("PHENOKPP_THREADS", "zero")
    with pytest.raises(ConfigError):
        default_threads()


# -- specs -------------------------------------------------------------------


def test_sweep_validation():
    with pytest.raises(ValueError):
        Sweep("L", (1.0, 1.0))
    with pytest.raises(ValueError):
        Sweep("d", (0.0, 1.0))
    with pytest.raises(ValueError):
        Sweep("T", (1.0,))
    with pytest.raises(ValueError):
        Sweep("L", (1.0,), relative=True)
    with pytest.raises(ValueError):
        Sweep("R", (1.0,), kinds=("periodic_neumann",))


def test_spec_validation_and_hash():
    with pytest.raises(ValueError):
        ExperimentSpec("x", CHECKER, simulate=True, horizon=0.0)
    a = ExperimentSpec("x", CHECKER, SMALL)
    b = ExperimentSpec("x", CHECKER, SMALL)
    assert a.spec_hash() == b.spec_hash()
    assert a.spec_hash() != ExperimentSpec("x", CHECKER, SMALL, d=2.0).spec_hash()
    assert a.spec_hash(Tolerances()) != a.spec_hash(Tolerances(delta=0.1))


# -- drivers -----------------------------------------------------------------


def test_run_eigen_constant(tmp_path):
    spec = ExperimentSpec("const", LandscapePreset("constant", {"c": 0.5}), SMALL)
    rec = run_eigen(spec)
    assert rec.points[0]["lambda"] == pytest.approx(0.5, abs=1e-10)
    doc, _ = validate(rec, tmp_path)
    assert doc["spec_hash"] == spec.spec_hash(Tolerances())
    assert doc["version"] and doc["grids"][0]["total_nodes"] == 16 * 9


def test_run_monotonicity_flat_for_constant(tmp_path):
    const = LandscapePreset("constant", {"c": -0.2})
    for param, values in (("L", (0.5, 1.0, 2.0)), ("d", (0.5, 1.0, 4.0))):
        rec = run_monotonicity(ExperimentSpec(f"flat-{param}", const, SMALL, Sweep(param, values)))
        lams = [p["lambda"] for p in rec.points]
        assert max(lams) - min(lams) <= 1e-10
        doc, paths = validate(rec, tmp_path)
        assert paths[1].name == f"flat-{param}_lambda_vs_{param}.csv"


def test_run_monotonicity_checkerboard_threads_deterministic():
    spec = ExperimentSpec("cb", CHECKER, SMALL, Sweep("L", (0.5, 1.0, 2.0, 4.0)))
    one = run_monotonicity(spec, threads=1)
    many = run_monotonicity(spec, threads=3)
    assert [p["lambda"] for p in one.points] == [p["lambda"] for p in many.points]
    assert one.passed


def test_run_truncation_study(tmp_path):
    spec = ExperimentSpec(
        "trunc",
        LandscapePreset("env_gradient", {"B": 1.0}),
        GridPolicy(space_nodes=8, pheno_halfwidth=1.0, pheno_nodes=9),
        Sweep("R", (1.0, 1.5, 2.0)),
    )
    rec = run_truncation_study(spec)
    assert rec.passed
    kinds = [p["kind"] for p in rec.points]
    assert kinds == ["reference", "periodic_dirichlet_theta", "dirichlet_ball", "mixed"]
    validate(rec, tmp_path)


def test_run_dichotomy_small(tmp_path):
    spec = ExperimentSpec(
        "dich", CHECKER, SMALL, Sweep("c", (-0.3, 0.3), relative=True), simulate=True, horizon=80.0, coth_radius=0.5
    )
    rec = run_dichotomy(spec)
    base, lo, hi = rec.points
    assert lo["verdict"] == "extinct" and hi["verdict"] == "persist"
    assert lo["lambda"] == pytest.approx(-0.3, abs=1e-10)
    assert lo["decay_rate"] <= lo["lambda"] + 0.05
    validate(rec, tmp_path)


def test_dichotomy_contradiction_raises():
    spec = ExperimentSpec("short", CHECKER, SMALL, Sweep("c", (-0.3,), relative=True), simulate=True, horizon=1.0)
    with pytest.raises(ExperimentFailure) as exc:
        run_dichotomy(spec)
    failed = exc.value.record.failures()
    assert failed and failed[0]["name"].startswith("extinct")
    rec = run_dichotomy(spec, raise_on_failure=False)
    assert not rec.passed


def test_run_simulation_verdict():
    spec = ExperimentSpec(
        "sim",
        LandscapePreset("constant", {"c": 1.0}),
        GridPolicy(space_nodes=4, pheno_nodes=5),
        simulate=True,
        horizon=20.0,
        initial=InitialDatum("constant_patch", {"amplitude": 0.5}),
    )
    rec = run_simulation(spec)
    assert rec.points[0]["verdict"] == "persist"
    assert rec.points[0]["final_sup_rho"] == pytest.approx(1.0, rel=1e-6)


def test_drivers_need_matching_sweep():
    spec = ExperimentSpec("x", CHECKER, SMALL)
    for fn in (run_dichotomy, run_monotonicity, run_truncation_study):
        with pytest.raises(ValueError):
            fn(spec)
