import json
import math

import pytest
import tomli

from holderlab.coeffs import CoefficientSpec, Expr
from holderlab.errors import ConfigError, ScenarioNotFound
from holderlab.lab import (REGISTRY, Registry, Scenario, default_registry, dumps_config,
                           echo_config, list_scenarios, parse_config, rerun, run_experiment)
from holderlab.lab.cli import main
from holderlab.lab.config import load_config, resolve_scenario
from holderlab.sde import spec_digest


def e1_config(tmp_path, **mc):
    return {"scenario": {"name": "gaussian", "eps": 4.0},
            "experiment": {"id": "E1", "outdir": str(tmp_path / "e1"), "svg": False},
            "mc": {"n_paths": 10_000, "seed": 3, **mc}}


def write_toml(path, cfg):
    path.write_text(dumps_config(cfg))
    return path


def test_registry_contents():
    names = REGISTRY.names()
    for n in ("gaussian", "ou", "holder05", "holder-var"):
        assert n in names
    g = REGISTRY.get("gaussian").spec
    assert g.sigma(0.7) == 1.0 and g.b(0.7) == 0.0
    hv = REGISTRY.get("holder-var").spec
    assert hv.sigma(0.3) == pytest.approx(2.0 + math.sin(0.3))
    assert hv.b(hv.y0 + 0.25) == pytest.approx(0.25 ** hv.alpha)
    assert [d["name"] for d in list_scenarios()] == names


def test_duplicate_and_missing():
    reg = default_registry()
    with pytest.raises(ConfigError):
        reg.add(reg.get("ou"))
    with pytest.raises(ScenarioNotFound):
        reg.get("nope")
    with pytest.raises(ScenarioNotFound):
        parse_config({"scenario": {"name": "nope", "eps": 1.0}, "experiment": {"id": "E1"}})


def test_custom_registry():
    reg = Registry()
    spec = CoefficientSpec(Expr.const(1.0), Expr.const(0.0), 0.0, 0.0, 1.0, 0.5, 0.5, 1.0)
    reg.add(Scenario("flat", spec))
    assert "flat" in reg and len(reg) == 1


@pytest.mark.parametrize("mutate,key", [
    (lambda c: c["scenario"].pop("eps"), "scenario.eps"),
    (lambda c: c["scenario"].update(eps=-1.0), "scenario.eps"),
    (lambda c: c["mc"].update(n_paht=5), "mc.n_paht"),
    (lambda c: c["mc"].update(n_paths=10), "mc.n_paths"),
    (lambda c: c["experiment"].update(cutoff="big"), "experiment.cutoff"),
    (lambda c: c["experiment"].update(id="E9"), "experiment.id"),
    (lambda c: c["experiment"].update(theta_max=float("nan")), "experiment.theta_max"),
    (lambda c: c.update(extra={}), "extra"),
])
def test_config_errors_name_the_key(tmp_path, mutate, key):
    cfg = e1_config(tmp_path)
    mutate(cfg)
    with pytest.raises(ConfigError) as ei:
        parse_config(cfg)
    assert ei.value.key == key
    assert key in str(ei.value)


def test_config_defaults_and_toml(tmp_path):
    cfg = parse_config(e1_config(tmp_path))
    assert cfg["experiment"]["cutoff"] == 8.0 and cfg["experiment"]["n_sigma"] == 4.0
    p = write_toml(tmp_path / "c.toml", cfg)
    assert load_config(p) == cfg
    (tmp_path / "bad.toml").write_text("[scenario\nname=1")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.toml")


@pytest.mark.parametrize("name", REGISTRY.names())
def test_scenario_echo_round_trip(name):
    sc = REGISTRY.get(name)
    raw = {"scenario": echo_config(sc), "experiment": {"id": "E3"}}
    back = parse_config(tomli.loads(dumps_config(raw)))
    sc2 = resolve_scenario(back)
    assert spec_digest(sc2.spec) == spec_digest(sc.spec)
    # echo with a custom sigma/b list bypasses the registry entirely
    assert echo_config(sc2) == echo_config(sc)


def test_e1_smoke(tmp_path):
    res = run_experiment(e1_config(tmp_path))
    out = res.outdir
    assert (out / "cf.csv").exists() and (out / "manifest.json").exists()
    man = json.loads((out / "manifest.json").read_text())
    assert man["experiment"] == "E1" and man["scenario"] == "gaussian"
    assert set(man["outputs"]) >= {"cf.csv", "bound_terms.csv"}
    assert man["config"]["mc"]["n_paths"] == 10_000
    for c in man["checks"]:
        assert "tolerance" in c and "pass" in c
    assert res.exit_code == (0 if res.passed else 2)


def test_e2_gaussian_center(tmp_path):
    cfg = {"scenario": {"name": "gaussian", "eps": 4.0},
           "experiment": {"id": "E2", "svg": False, "tol_center": 2e-2, "tol_sup": 5e-2},
           "mc": {"n_paths": 40_000, "seed": 2}}
    res = run_experiment(cfg, tmp_path / "e2")
    names = {c.name: c for c in res.checks}
    assert names["density_center"].passed
    assert (tmp_path / "e2" / "density.csv").exists()


def test_cli_exit_codes(tmp_path, capsys):
    p = write_toml(tmp_path / "ok.toml", e1_config(tmp_path))
    code = main(["run", str(p)])
    out = capsys.readouterr().out
    assert code in (0, 2) and ("PASS" in out or "FAIL" in out)
    bad = e1_config(tmp_path)
    del bad["scenario"]["eps"]
    (tmp_path / "bad.toml").write_text(dumps_config(bad))
    assert main(["run", str(tmp_path / "bad.toml")]) == 1
    assert "scenario.eps" in capsys.readouterr().err
    assert main(["list"]) == 0
    assert "holder-var" in capsys.readouterr().out
    assert main(["list", "--json"]) == 0
    assert len(json.loads(capsys.readouterr().out)) == len(REGISTRY)


def test_cli_failing_check_exits_two(tmp_path, capsys):
    # an impossibly tight density tolerance must fail, not error
    cfg = {"scenario": {"name": "gaussian", "eps": 4.0},
           "experiment": {"id": "E2", "svg": False, "tol_center": 1e-12},
           "mc": {"n_paths": 1000, "seed": 1}}
    p = write_toml(tmp_path / "tight.toml", cfg)
    assert main(["run", str(p), "--outdir", str(tmp_path / "o")]) == 2


def test_rerun_byte_identical(tmp_path):
    res = run_experiment(e1_config(tmp_path))
    rr = rerun(res.outdir / "manifest.json", tmp_path / "again")
    assert rr.mismatched == [] and not rr.code_changed
    for f in res.manifest["outputs"]:
        assert (res.outdir / f).read_bytes() == (tmp_path / "again" / f).read_bytes()
