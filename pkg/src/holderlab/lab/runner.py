"""Run an experiment from a config and re-run it from its manifest."""

from __future__ import annotations

import json
import os
import platform
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .._accel import backend_name, n_workers
from ..coeffs import validate_assumptions
from . import output
from .config import load_config, parse_config, resolve_scenario
from .experiments import EXPERIMENTS, Run, delta_ladder
from .scenarios import scenario_echo

MANIFEST = "manifest.json"


@dataclass
class RunResult:
    outdir: Path
    manifest: dict
    checks: list

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def exit_code(self):
        return 0 if self.passed else 2


def _fill_defaults(cfg, scenario):
    ex = cfg["experiment"]
    if "n_steps" not in cfg["mc"]:
        cfg["mc"]["n_steps"] = scenario.n_steps
    if ex["id"] in ("E4", "E6") and "deltas" not in ex:
        ex["deltas"] = delta_ladder(scenario.spec.t)
    return cfg


def _versions():
    import numba
    import scipy

    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def run_experiment(config, outdir=None):
    """Execute one experiment.

    Parameters
    ----------
    config : str, Path or dict
        TOML path or an already parsed mapping (e.g. a manifest's ``config``).
    outdir : str or Path, optional
        Overrides ``experiment.outdir``.

    Returns
    -------
    RunResult
    """
    cfg = load_config(config) if isinstance(config, (str, Path)) else parse_config(config)
    scenario = resolve_scenario(cfg)
    cfg = _fill_defaults(cfg, scenario)
    ex = cfg["experiment"]
    out = Path(outdir or ex.get("outdir") or f"lab_out/{ex['id']}_{scenario.name}")
    out.mkdir(parents=True, exist_ok=True)
    validate_assumptions(scenario.spec)
    run = Run(cfg, scenario, out)
    t0 = time.perf_counter()
    EXPERIMENTS[ex["id"]](run)
    wall = time.perf_counter() - t0
    manifest = {
        "experiment": ex["id"],
        "scenario": scenario.name,
        "config": cfg,
        "scenario_echo": scenario_echo(scenario),
        "code_digest": output.code_digest(),
        "backend": backend_name(),
        "workers": n_workers(),
        "versions": _versions(),
        "outputs": {f: output.sha256_file(out / f) for f in run.files},
        "checks": [c.as_dict() for c in run.checks],
        "info": run.info,
        "passed": all(c.passed for c in run.checks),
        "wall_clock_s": wall,
    }
    output.write_json(out / MANIFEST, manifest)
    return RunResult(out, manifest, run.checks)


@dataclass
class RerunResult:
    result: RunResult
    mismatched: list
    code_changed: bool

    @property
    def exit_code(self):
        return 2 if self.mismatched else self.result.exit_code


def rerun(manifest_path, outdir=None):
    """Re-run a manifest and compare output digests byte for byte.

    The manifest's backend is used unless ``HOLDERLAB_BACKEND`` is set.
    """
    mpath = Path(manifest_path)
    with open(mpath) as fh:
        man = json.load(fh)
    out = Path(outdir) if outdir else mpath.parent / "rerun"
    prev = os.environ.get("HOLDERLAB_BACKEND")
    if prev is None:
        os.environ["HOLDERLAB_BACKEND"] = man.get("backend", "numba")
    try:
        res = run_experiment(man["config"], out)
    finally:
        if prev is None:
            os.environ.pop("HOLDERLAB_BACKEND", None)
    old = man.get("outputs", {})
    new = res.manifest["outputs"]
    bad = sorted(f for f in set(old) | set(new) if old.get(f) != new.get(f))
    return RerunResult(res, bad, man.get("code_digest") != res.manifest["code_digest"])
