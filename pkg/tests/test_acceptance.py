"""Acceptance criteria 1-10, one test each.

Every test records a single ``criterion N: PASS|FAIL`` line (printed
immediately and repeated in the terminal summary) before asserting.
Runtimes are measured in-process and compared to the stated limits.
"""

import math
import time

import numpy as np
import pytest

from holderlab.charfn import beta_window, delta_schedule
from holderlab.errors import EmptyWindow, ThetaTooSmall
from holderlab.lab import REGISTRY, run_experiment
from holderlab.mollifier import eval_phi, eval_phi_deriv

pytestmark = pytest.mark.acceptance

RESULTS = {}


def record(n, ok, elapsed, limit, detail):
    ok = bool(ok) and elapsed < limit
    RESULTS[n] = (f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  "
                  f"({elapsed:.1f}s of {limit:g}s)  {detail}")
    print(RESULTS[n])
    return ok


def run(tmp_path, tag, scenario, eid, n_paths, **ex):
    cfg = {"scenario": {"name": scenario, "eps": REGISTRY.get(scenario).spec.eps},
           "experiment": {"id": eid, "svg": False, **ex},
           "mc": {"n_paths": n_paths, "seed": 1}}
    return run_experiment(cfg, tmp_path / tag)


def checks(res, prefix=""):
    return {c.name: c for c in res.checks if c.name.startswith(prefix)}


def failed(*results):
    return [c.name for r in results for c in r.checks if not c.passed]


def test_criterion_01_mollifier(tmp_path):
    t0 = time.perf_counter()
    ok, worst = True, 0.0
    for eps in (1.0, 2.0, 5.0):
        x = np.linspace(-3 * eps, 3 * eps, 10_000)
        v = eval_phi(eps, None, x)
        ok &= bool(np.all(v >= (np.abs(x) <= eps)) and np.all(v <= (np.abs(x) < 2 * eps)))
        h = 1e-5
        fd1 = (eval_phi(eps, None, x + h) - eval_phi(eps, None, x - h)) / (2 * h)
        fd2 = (eval_phi_deriv(eps, None, x + h, 1) - eval_phi_deriv(eps, None, x - h, 1)) / (2 * h)
        worst = max(worst, np.max(np.abs(eval_phi_deriv(eps, None, x, 1) - fd1)),
                    np.max(np.abs(eval_phi_deriv(eps, None, x, 2) - fd2)))
    ok &= worst <= 1e-5
    assert record(1, ok, time.perf_counter() - t0, 1.0,
                  f"sandwich exact on 10^4 points, max |analytic - FD| = {worst:.2e} <= 1e-5")


def test_criterion_02_gaussian_pipeline(tmp_path):
    t0 = time.perf_counter()
    r1 = run(tmp_path, "e1", "gaussian", "E1", 1_000_000, cutoff=8.0, cf_check_theta=3.0)
    r2 = run(tmp_path, "e2", "gaussian", "E2", 1_000_000, cutoff=8.0, tol_center=5e-3)
    cf, c0 = checks(r1)["cf_matches_oracle"], checks(r2)["density_center"]
    ok = cf.passed and c0.passed
    assert record(2, ok, time.perf_counter() - t0, 120.0,
                  f"|p(y0) - 1/sqrt(2 pi)| = {c0.value:.2e} <= 5e-3; worst cf gap "
                  f"{cf.value:.2e} <= {cf.tolerance:.2e} (4 SE + 1e-6) for theta <= 3")


def test_criterion_03_ou(tmp_path):
    t0 = time.perf_counter()
    r = run(tmp_path, "ou", "ou", "E2", 1_000_000, tol_sup=1e-2)
    c = checks(r)
    v, s = c["terminal_variance"], c["density_sup_error"]
    ok = v.passed and s.passed
    assert record(3, ok, time.perf_counter() - t0, 120.0,
                  f"|var - (1-e^-2t)/2| = {v.value:.2e} <= {v.tolerance:.2e}; "
                  f"sup density error {s.value:.2e} <= 1e-2")


def test_criterion_04_moment_bound(tmp_path):
    t0 = time.perf_counter()
    res = [run(tmp_path, f"e3_{n}", n, "E3", 100_000, deltas=[0.01, 0.04, 0.16], ps=[2.0, 4.0],
               slack=1.02, equality_n_se=2.0) for n in REGISTRY.names()]
    bounds = [c for r in res for c in r.checks if c.name.startswith("moment_bound")]
    eq = {(r.manifest["scenario"], c.name): c for r in res for c in r.checks
          if c.name.startswith("moment_equality")}
    n_const = sum(k[0] == "constdrift" for k in eq)
    eq = list(eq.values())
    ok = all(c.passed for c in bounds + eq) and len(bounds) == 6 * len(res) and n_const == 3
    worst = max(c.value / c.tolerance for c in bounds)
    assert record(4, ok, time.perf_counter() - t0, 60.0,
                  f"{len(bounds)} moment bounds over {len(res)} scenarios (worst ratio "
                  f"{worst:.4f}); constdrift equality within 2 SE at 3 deltas; "
                  f"failed: {[c.name for c in bounds + eq if not c.passed]}")


@pytest.fixture(scope="module")
def e5_runs(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("e5")
    t0 = time.perf_counter()
    res = [run(tmp, n, n, "E5", 100_000) for n in ("gaussian", "holder-var")]
    return res, time.perf_counter() - t0


def test_criterion_05_ibp(e5_runs):
    res, elapsed = e5_runs
    ibp = [c for r in res for c in r.checks if c.name.startswith("ibp[")]
    her = [c for r in res for c in r.checks if c.name.startswith("hermite")]
    pairs = {(r.manifest["scenario"], c.name.split("[")[1].rsplit(",", 1)[0])
             for r in res for c in r.checks if c.name.startswith("ibp[")}
    ok = all(c.passed for c in ibp + her) and len(pairs) == 12 + 7 and len(her) == 4
    assert record(5, ok, elapsed, 60.0,
                  f"{len(ibp)} identities over {len(pairs)} (F, G, order) entries within 4 SE; "
                  f"Hermite max err {max(c.value for c in her):.1e} <= 1e-12; "
                  f"failed: {[c.name for c in ibp + her if not c.passed]}")


def test_criterion_06_scaling(e5_runs):
    res, elapsed = e5_runs
    sc = [(r.manifest["scenario"], c) for r in res for c in r.checks
          if c.name.startswith("norm_scaling")]
    ok = all(c.passed for _, c in sc) and len(sc) == 4 + 3
    desc = ", ".join(f"{s}:{c.name[13:-1]} {c.value:.3f}" for s, c in sc)
    assert record(6, ok, elapsed, 120.0, f"slopes {desc}")


def test_criterion_07_approximation_rate(tmp_path):
    t0 = time.perf_counter()
    r = run(tmp_path, "e6", "weierstrass05", "E6", 100_000, companion="weierstrass075",
            deltas=[2.0**-k for k in range(4, 10)], tol=0.15)
    c = checks(r)
    s5, s75 = c["approx_slope[weierstrass05]"], c["approx_slope[weierstrass075]"]
    ok = s5.passed and s75.passed and c["approx_slope_direction"].passed
    assert record(7, ok, time.perf_counter() - t0, 300.0,
                  f"slope {s5.value:.3f} in [0.60, 0.90] (alpha 0.5), {s75.value:.3f} in "
                  f"[0.725, 1.025] (alpha 0.75), moves with alpha")


def test_criterion_08_events(tmp_path):
    t0 = time.perf_counter()
    r = run(tmp_path, "e4", "holder05", "E4", 100_000, max_exception_fraction=1e-3)
    c = r.checks
    groups = {k: [x for x in c if x.name.startswith(k)]
              for k in ("A_C_disjoint", "decomposition", "oracle_dominates")}
    ok = all(x.passed for x in c) and all(len(g) == 6 for g in groups.values())
    assert record(8, ok, time.perf_counter() - t0, 120.0,
                  f"A and C disjoint at 6 deltas; max exception fraction "
                  f"{max(x.value for x in groups['decomposition']):.1e} <= 1e-3; "
                  f"oracle dominates at every delta; failed: {failed(r)}")


def test_criterion_09_beta_window():
    t0 = time.perf_counter()
    ok = beta_window(0.5, 0.25) == (5 / 3, 2.0)
    for a, g in ((0.5, 0.5), (0.5, 0.7), (0.3, 0.9)):
        with pytest.raises(EmptyWindow):
            beta_window(a, g)
    ok &= all(beta_window(a, g)[0] < 2 for a, g in ((0.5, 0.0), (0.9, 0.89), (0.1, 0.05)))
    for t, beta in ((1.0, 1.8), (0.25, 1.5)):
        lim = min(t, 1.0) ** (-1.0 / beta)
        with pytest.raises(ThetaTooSmall):
            delta_schedule(lim, beta, t)
        with pytest.raises(ThetaTooSmall):
            delta_schedule(-0.5 * lim, beta, t)
        ok &= delta_schedule(2 * lim, beta, t) == (2 * lim) ** -beta
    assert record(9, ok, time.perf_counter() - t0, 1.0,
                  "beta_window(0.5, 0.25) == (5/3, 2); empty iff gamma >= alpha; "
                  "|theta| <= (t^1)^(-1/beta) rejected")


def test_criterion_10_reproducibility(tmp_path, monkeypatch):
    t0 = time.perf_counter()
    digests = {}
    for w in (1, 4, 16):
        monkeypatch.setenv("HOLDERLAB_WORKERS", str(w))
        ra = run(tmp_path, f"e3_w{w}", "holder-var", "E3", 100_000)
        rb = run(tmp_path, f"e1_w{w}", "gaussian", "E1", 100_000)
        digests[w] = {f"{r.manifest['experiment']}/{f}": (r.outdir / f).read_bytes()
                      for r in (ra, rb) for f in r.manifest["outputs"] if f.endswith(".csv")}
        assert ra.manifest["workers"] == w
    ok = digests[1] == digests[4] == digests[16] and len(digests[1]) >= 4
    assert record(10, ok, time.perf_counter() - t0, 60.0,
                  f"{len(digests[1])} CSVs byte-identical across 1, 4 and 16 workers")


def summary_lines():
    return [RESULTS[k] for k in sorted(RESULTS)]
