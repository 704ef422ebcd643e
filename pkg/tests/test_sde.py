import math

import numpy as np
import pytest

from holderlab import sde
from holderlab.coeffs import CoefficientSpec, Expr, build_truncated
from holderlab.errors import InsufficientHits, InvalidParams, NanDivergence
from holderlab.stats import loglog_fit


def spec(sigma, b, x0=0.0, y0=0.0, eps=1.0, **kw):
    return CoefficientSpec(sigma, b, x0, y0, eps, 0.4, 0.5, kw.pop("holder_const", 10.0), **kw)


ZERO = Expr.const(0.0)
ONE = Expr.const(1.0)
HOLDER_VAR = spec(Expr.const(2.0) + Expr.sin(), Expr.abspow(1.0, 0.0, 0.5))


def test_zero_noise_keeps_x0():
    e = sde.simulate_euler(spec(ZERO, ZERO, x0=0.7), sde.SimGrid(0, 1, 20), 50, 1)
    assert np.all(e.x_terminal == 0.7)


def test_gaussian_moments():
    # Euler is exact for constant coefficients, so 10 steps suffice
    e = sde.simulate_euler(spec(ONE, ZERO, x0=0.3), sde.SimGrid(0, 1, 10), 1_000_000, 2)
    assert abs(e.x_terminal.mean() - 0.3) <= 4e-3
    assert abs(e.x_terminal.var() - 1.0) <= 5e-3


def test_ou_variance():
    n, dt, N = 400, 1 / 400, 200_000
    e = sde.simulate_euler(spec(ONE, -1.0 * Expr.poly(1.0, 0.0, 1)), sde.SimGrid(0, 1, n), N, 4)
    exact = (1 - math.exp(-2)) / 2
    # variance of the Euler recursion itself; the O(dt) bias is known exactly
    euler = dt * (1 - (1 - dt) ** (2 * n)) / (1 - (1 - dt) ** 2)
    assert abs(euler - exact) < 1e-3
    se = euler * math.sqrt(2 / N)
    assert abs(e.x_terminal.var() - euler) <= 4 * se


def test_substeps_couple_grids():
    s = HOLDER_VAR
    a = sde.simulate_euler(s, sde.SimGrid(0, 1, 8), 100, 1, record=True, substeps=2)
    b = sde.simulate_euler(s, sde.SimGrid(0, 1, 16), 100, 1, record=True)
    np.testing.assert_allclose(a.increments, b.increments[:, ::2] + b.increments[:, 1::2],
                               rtol=0, atol=1e-14)


def test_grid_refinement_weak_order():
    s = spec(Expr.const(0.5), Expr.cos(2.0, 1.5), x0=0.3, holder_const=100.0)
    ns = [4, 8, 16, 32, 64]
    xs = [sde.simulate_euler(s, sde.SimGrid(0, 1, n), 20_000, 5, substeps=128 // n).x_terminal
          for n in ns]
    d = np.abs([np.mean(xs[i] - xs[i + 1]) for i in range(4)])
    fit = loglog_fit(1.0 / np.array(ns[:-1]), d)
    assert fit.slope == pytest.approx(1.0, abs=0.15)


def test_localized_constant_is_exact():
    tc = build_truncated(spec(ONE, ZERO))
    g = sde.SimGrid(0.5, 1.0, 50)
    inc = np.random.default_rng(0).normal(scale=math.sqrt(g.dt), size=(4, 50))
    p = sde.simulate_localized(tc, 0.5, 0.2, g, inc, driftless=True)
    np.testing.assert_allclose(p[:, 1:], 0.2 + np.cumsum(inc, axis=1), atol=1e-14)


def test_localized_rejects_bad_grid():
    tc = build_truncated(spec(ONE, ZERO))
    with pytest.raises(InvalidParams):
        sde.simulate_localized(tc, 0.0, 0.0, sde.SimGrid(0.1, 1.0, 5), np.zeros(5))
    with pytest.raises(InvalidParams):
        sde.simulate_localized(tc, 0.1, 0.0, sde.SimGrid(0.1, 1.0, 5), np.zeros(4))


@pytest.mark.parametrize("name", ["numpy", "numba"])
def test_coupling_inside_window(name, monkeypatch):
    monkeypatch.setenv("HOLDERLAB_BACKEND", name)
    tc = build_truncated(HOLDER_VAR)
    g = sde.SimGrid(0, 1, 100)
    e = sde.simulate_euler(HOLDER_VAR, g, 300, 3, record=True)
    k0 = 40
    sub = sde.SimGrid(g.times()[k0], 1.0, 60)
    xb = sde.simulate_localized(tc, sub.t_start, e.states_X[:, k0], sub, e.increments[:, k0:])
    inside = np.all(np.abs(e.states_X[:, k0:]) <= 4.0, axis=1)
    assert inside.sum() > 100
    tol = 0.0 if name == "numpy" else 1e-12
    assert np.max(np.abs(xb[inside] - e.states_X[inside, k0:])) <= tol


def test_sup_increment_moment_slope():
    tc = build_truncated(HOLDER_VAR)
    ds = np.array([2.0**-k for k in range(4, 10)])
    r = sde.sup_increment_moment(tc, 0.0, ds, 20_000, 1)
    assert loglog_fit(ds, np.array([m for m, _ in r])).slope >= 1.0


def test_nan_divergence_reports_path():
    s = spec(ONE, Expr.poly(1.0, 0.0, 3), x0=3.0)
    with pytest.raises(NanDivergence) as ei:
        sde.simulate_euler(s, sde.SimGrid(0, 1, 10), 5, 1)
    assert ei.value.path == 0 and ei.value.step >= 1


# stopping times

def test_stopping_constant_paths():
    s = spec(ONE, ZERO, eps=0.5)
    g = sde.SimGrid(0, 1, 100)
    nu, tau = sde.stopping_times(np.zeros(101), g, 1.0, 0.2, s)
    assert nu == pytest.approx(0.8) and math.isinf(tau)
    nu, tau = sde.stopping_times(np.full(101, 5.0), g, 1.0, 0.2, s)
    assert math.isinf(nu) and math.isinf(tau)


def test_stopping_crossing_refines():
    s = spec(ONE, ZERO, eps=0.5)
    path = lambda t: 3.0 - 2.5 * t  # enters the 1.5 ball at t = 0.6
    coarse = sde.SimGrid(0, 1, 50)
    fine = sde.SimGrid(0, 1, 100)
    nc, _ = sde.stopping_times(path(coarse.times()), coarse, 1.0, 0.5, s)
    nf, _ = sde.stopping_times(path(fine.times()), fine, 1.0, 0.5, s)
    assert nc >= 0.6 - 1e-12 and nc == pytest.approx(0.6, abs=coarse.dt + 1e-12)
    assert abs(nc - nf) <= coarse.dt + 1e-12


def test_stopping_exit():
    s = spec(ONE, ZERO, eps=0.5)
    g = sde.SimGrid(0, 1, 10)
    x = np.array([0, 0, 0, 0, 0, 0, 0, 0, 1.0, 2.5, 0])
    nu, tau = sde.stopping_times(x, g, 1.0, 0.5, s)
    assert nu == pytest.approx(0.5) and tau == pytest.approx(0.9)


def test_stopping_bad_delta():
    with pytest.raises(InvalidParams):
        sde.stopping_times(np.zeros(11), sde.SimGrid(0, 1, 10), 1.0, 1.0, spec(ONE, ZERO))


# events

def test_events_frozen_all_a():
    s = spec(ZERO, ZERO)
    e = sde.simulate_events(s, 1.0, 0.1, 500, 1, 16, 1e-2)
    c = sde.classify_events(e, 1.0, 0.1, s)
    assert c.n_A == 500 and c.n_C == 0


def test_events_far_all_neither():
    s = spec(ZERO, ZERO, x0=10.0)
    e = sde.simulate_events(s, 1.0, 0.1, 500, 1, 16, 1e-2)
    c = sde.classify_events(e, 1.0, 0.1, s)
    assert c.n_neither == 500 and c.n_localized == 0


def test_small_delta_escape_is_rare():
    s = spec(ONE, ZERO)
    e = sde.simulate_events(s, 1.0, 0.01, 100_000, 2, 64, 1e-2)
    c = sde.classify_events(e, 1.0, 0.01, s)
    assert c.n_C / e.n_paths < 1e-4
    assert np.sum(e.labels == sde.LABEL_A) == c.n_A


def test_event_rates_vs_oracle_and_monotone():
    s = spec(ONE, ZERO, eps=0.5)
    rep = sde.estimate_event_rate(s, 1.0, [0.25, 0.125, 0.0625], 20_000, 3, 64, 1e-2)
    assert np.all(rep.prob <= rep.oracle)
    # deltas are sorted descending; the event shrinks with delta
    assert np.all(rep.prob[1:] <= rep.ci_high[:-1])
    for c in rep.classifications:
        assert not np.any((c.labels == sde.LABEL_A) & (c.labels == sde.LABEL_C))
        assert c.n_A + c.n_C + c.n_neither == rep.n_paths


def test_drift_only_never_escapes():
    s = spec(ZERO, ONE, eps=1.0)
    with pytest.raises(InsufficientHits) as ei:
        sde.estimate_event_rate(s, 1.0, [0.5, 0.25, 0.125], 200, 1, 16, 1e-2)
    assert np.all(ei.value.report.counts == 0)


def test_subgaussian_oracle_reduces():
    tc = build_truncated(spec(ONE, ZERO))
    assert sde.subgaussian_oracle(tc, 0.01) == pytest.approx(4 * math.exp(-1 / 0.04))


def test_classify_requires_event_data():
    e = sde.simulate_euler(spec(ONE, ZERO), sde.SimGrid(0, 1, 4), 3, 1)
    with pytest.raises(InvalidParams):
        sde.classify_events(e, 1.0, 0.1, spec(ONE, ZERO))


# determinism and persistence

@pytest.mark.parametrize("fn", ["euler", "events"])
def test_workers_bitwise(fn, monkeypatch):
    def run():
        if fn == "euler":
            return sde.simulate_euler(HOLDER_VAR, sde.SimGrid(0, 1, 20), 10_000, 9).x_terminal
        e = sde.simulate_events(HOLDER_VAR, 1.0, 0.1, 10_000, 9, 16, 1e-2)
        return np.concatenate([e.x_terminal, e.supinc, e.nu])

    out = []
    for w in ("1", "4", "16"):
        monkeypatch.setenv("HOLDERLAB_WORKERS", w)
        out.append(run().tobytes())
    assert out[0] == out[1] == out[2]


def test_backends_agree():
    import os

    res = {}
    for b in ("numba", "numpy"):
        os.environ["HOLDERLAB_BACKEND"] = b
        try:
            e = sde.simulate_events(HOLDER_VAR, 1.0, 0.1, 3000, 9, 16, 1e-2)
            res[b] = (sde.simulate_euler(HOLDER_VAR, sde.SimGrid(0, 1, 20), 3000, 9).x_terminal,
                      e.supinc, e.labels)
        finally:
            del os.environ["HOLDERLAB_BACKEND"]
    for a, b in zip(res["numba"], res["numpy"]):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_save_load_roundtrip(tmp_path):
    e = sde.simulate_events(HOLDER_VAR, 1.0, 0.1, 100, 2, 8, 1e-2, record=True)
    p = tmp_path / "ens.bin"
    sde.save_ensemble(e, p, spec=HOLDER_VAR)
    back = sde.load_ensemble(p, spec=HOLDER_VAR)
    for name in ("x_terminal", "states_X", "states_Xbar", "increments", "nu", "tau", "labels",
                 "stream_ids", "supinc", "phi_positive"):
        np.testing.assert_array_equal(getattr(back, name), getattr(e, name))
    assert back.grid == e.grid and back.seed == e.seed
    with pytest.raises(InvalidParams):
        sde.load_ensemble(p, spec=spec(ONE, ZERO))
