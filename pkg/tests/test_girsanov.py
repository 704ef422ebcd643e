import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from holderlab import girsanov as gv
from holderlab import rng
from holderlab.coeffs import CoefficientSpec, Expr, build_truncated
from holderlab.errors import InvalidParams, OverflowGuard
from holderlab.sde import SimGrid, simulate_localized


def tc_of(sigma, b, eps=1.0, holder_const=1.0):
    return build_truncated(CoefficientSpec(sigma, b, 0.0, 0.0, eps, 0.5, 0.5, holder_const),
                           validate=False)


FLAT = tc_of(Expr.const(1.0), Expr())
CONST = tc_of(Expr.const(1.0), Expr.const(0.8))
HVAR = tc_of(Expr.const(2.0) + Expr.sin(), Expr.abspow(1.0, 0.0, 0.5), holder_const=1.06)


def test_zero_psi_gives_unit_weights():
    w = gv.simulate_window(FLAT, 0.0, 0.1, 32, 1000, 1).weights
    assert np.all(w.z == 1.0) and np.all(w.z_sde == 1.0)
    m = gv.moment_bound_check(w, 2)
    assert m.empirical == m.bound == 1.0 and m.passed


def test_constant_psi_lognormal_moment():
    w = gv.simulate_window(CONST, 0.3, 0.16, 64, 200_000, 1).weights
    m = gv.moment_bound_check(w, 2)
    exact = math.exp(0.8**2 * 0.16)
    assert m.bound == pytest.approx(exact, rel=1e-15)
    assert abs(m.empirical - exact) <= 4 * m.se
    assert m.passed


def test_martingale_mean_over_deltas():
    for i, d in enumerate([0.01, 0.02, 0.04, 0.08, 0.16]):
        mean, se = gv.simulate_window(HVAR, 0.0, d, 32, 50_000, 10 + i).weights.mean_se()
        assert abs(mean - 1.0) <= 4 * se


def test_positive_weights():
    w = gv.simulate_window(HVAR, 0.5, 0.5, 16, 20_000, 4).weights
    assert np.all(w.z > 0)


def test_reweighting_restores_drift():
    s = gv.simulate_window(CONST, 0.3, 0.16, 64, 200_000, 2)
    est, se = gv.reweighted_expectation(s.x_terminal, s.weights)
    assert abs(est - (0.3 + 0.8 * 0.16)) <= 4 * se
    one, se1 = gv.reweighted_expectation(np.ones(len(s.x_terminal)), s.weights)
    assert abs(one - 1.0) <= 4 * se1


def test_cross_check_q_vs_p():
    r = gv.cross_check(HVAR, 0.2, 0.1, 32, 40_000, 3, np.sin)
    assert r["pass"]


def test_holder_drift_strictly_below_bound():
    w = gv.simulate_window(HVAR, 0.0, 0.05, 64, 100_000, 5).weights
    m = gv.moment_bound_check(w, 2)
    assert m.ci[1] < m.bound and m.passed


def test_weights_from_recorded_paths_match_kernel():
    d, m, n = 0.1, 16, 200
    s = gv.simulate_window(HVAR, 0.1, d, m, n, 6, record=True)
    inc = np.sqrt(d / m) * rng.normals(6, n, m, rng.STREAM_WINDOW)
    w = gv.girsanov_weight(s.states, inc, HVAR, d)
    np.testing.assert_allclose(w.log_z, s.weights.log_z, rtol=0, atol=1e-12)
    np.testing.assert_allclose(w.z_sde, s.weights.z_sde, rtol=1e-12)
    # and the recorded states are the driftless localized chain
    p = simulate_localized(HVAR, 0.0, 0.1, SimGrid(0.0, d, m), inc, driftless=True)
    np.testing.assert_allclose(p, s.states, rtol=0, atol=1e-12)


def test_overflow_guard():
    big = tc_of(Expr.const(1.0), Expr.const(60.0))
    with pytest.raises(OverflowGuard):
        gv.simulate_window(big, 0.0, 0.9, 16, 100, 1)


def test_form_gap_pathwise_half_order():
    r = gv.form_gap_refinement(HVAR, 0.0, 0.16, [8, 16, 32, 64, 128], 20_000, 1)
    assert r["rms_slope"] == pytest.approx(0.5, abs=0.1)


def test_form_gap_mean_log_leading_term():
    # log(1 + x) - x + x^2/2 = x^3/3 - x^4/4 + ..., so with x = c dW the expected
    # log gap is -3/4 c^4 dt per step, -3/4 c^4 delta dt in total
    c, d = 0.8, 0.16
    for m in (8, 16):
        w = gv.simulate_window(CONST, 0.0, d, m, 200_000, 7).weights
        gap = np.log(w.z_sde) - w.log_z
        se = gap.std(ddof=1) / math.sqrt(len(gap))
        dt = d / m
        assert abs(gap.mean() + 0.75 * c**4 * d * dt) <= 4 * se + c**6 * d * dt**2 * 5


def test_c_alpha_zero_psi():
    for a in (0.25, 0.5, 0.75):
        ca, b1, b2 = gv.compute_C_alpha(FLAT, 0.1, a)
        assert ca == pytest.approx(2 / math.sqrt(1 + a), rel=1e-15) and b2 == 0.0


def test_c_alpha_grows_toward_one():
    vals = [gv.compute_C_alpha(HVAR, 0.1, a)[1] for a in (0.5, 0.9, 0.99, 0.999)]
    assert np.all(np.diff(vals) > 0) and math.isfinite(vals[-1])
    with pytest.raises(InvalidParams):
        gv.compute_C_alpha(HVAR, 0.1, 1.0)


def test_plugin_norms_dominate_mc():
    a, d = 0.5, 0.04
    w = gv.simulate_window(HVAR, 0.0, d, 64, 100_000, 2).weights
    q_norm, two_norm = gv.mc_z_norms(w, a)
    assert q_norm <= gv.lp_norm_bound(2 / (1 - a), d, HVAR.sup_psi)
    assert two_norm <= gv.lp_norm_bound(2, d, HVAR.sup_psi)


@settings(max_examples=25)
@given(p=st.floats(1.01, 6), d=st.floats(1e-3, 1), s=st.floats(0, 5))
def test_exp_moment_bound_consistent(p, d, s):
    b = gv.exp_moment_bound(p, d, s)
    assert b >= 1.0
    assert gv.lp_norm_bound(p, d, s) == pytest.approx(b ** (1 / p), rel=1e-12)


def test_approximation_term_zero_for_constant_psi():
    s = CoefficientSpec(Expr.const(1.0), Expr.const(0.5), 0.0, 0.0, 1.0, 0.5, 0.5, 1.0)
    tc = build_truncated(s)
    r = gv.approximation_term(s, tc, 1.0, [2.0**-k for k in range(4, 8)], 2000, 1, 16, 1e-1)
    # psi Z - psi = psi (Z - 1), so the term scales like delta (slope 1)
    assert r.slope == pytest.approx(1.0, abs=0.1)
