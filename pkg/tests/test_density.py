import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from holderlab import charfn as cf
from holderlab import density as dn
from holderlab.errors import InvalidParams, TailDivergence

SQ2PI = 1 / math.sqrt(2 * math.pi)


def table(thetas, values, se=0.0, n_paths=10**12, m0=None, loc=(0.0, 1.0, 1.5)):
    th = np.asarray(thetas, dtype=float)
    return cf.CharFnTable(th, np.asarray(values, dtype=complex), np.full(len(th), se), n_paths,
                          loc, None, m0)


def gauss_table(cutoff=8.0, mean=0.0):
    th = cf.inversion_thetas(cutoff, 257)
    return table(th, np.exp(1j * th * mean - th**2 / 2))


@pytest.fixture(scope="module")
def normal_samples():
    return np.random.default_rng(5).standard_normal(400_000)


def test_gaussian_center_value():
    p = dn.levy_invert(gauss_table(), [0.0], 8.0)
    assert abs(p.values[0] - SQ2PI) <= 1e-6
    assert p.quadrature_error_bound < 1e-6


def test_gaussian_profile_and_shift():
    xs = np.linspace(-2, 2, 81)
    p = dn.levy_invert(gauss_table(8.0, 0.7), xs, 8.0)
    np.testing.assert_allclose(p.values, dn.gaussian_density(xs, 0.7), atol=1e-6)


def test_even_cf_gives_symmetric_profile():
    th = cf.inversion_thetas(10.0, 129)
    xs = np.linspace(-1.5, 1.5, 61)
    p = dn.levy_invert(table(th, 1 / (1 + th**2) ** 1.2), xs, 10.0)
    np.testing.assert_allclose(p.values, p.values[::-1], atol=1e-14)


def test_zero_table_zero_profile():
    th = cf.inversion_thetas(8.0, 65)
    p = dn.levy_invert(table(th, np.zeros(len(th))), np.linspace(-1, 1, 11), 8.0)
    assert np.all(p.values == 0.0)


def test_local_density_branches():
    p = dn.levy_invert(gauss_table(), np.linspace(-1, 1, 11), 8.0)
    z = dn.local_density(0.0, p, 1.0, 0.0)
    assert np.all(z.values == 0.0)
    np.testing.assert_array_equal(dn.local_density(1.0, p, 1.0, 0.0).values, p.values)
    with pytest.raises(InvalidParams):
        dn.local_density(-0.1, p, 1.0, 0.0)


def test_localized_gaussian_matches_truth(normal_samples):
    # a narrow window has steep ramps and a slowly decaying localized cf whose
    # truncation is not in the budget; eps = 1 keeps it near 1e-3 at cutoff 24
    y0, eps = 0.0, 1.0
    th = cf.inversion_thetas(24.0, 257)
    t = cf.localized_charfn(normal_samples, th, y0, eps)
    xs = np.linspace(y0 - eps, y0 + eps, 41)
    p = dn.invert_localized(t, xs, 24.0)
    err = np.abs(p.values - dn.gaussian_density(xs))
    assert np.all(err <= p.error_budget)
    assert p.values.min() >= -p.error_budget
    assert p.imag_residue <= 10 * max(p.quadrature_error_bound, 1e-15) + p.mc_error_bound


def test_truncation_error_shrinks_with_cutoff():
    from scipy.integrate import simpson

    from holderlab.mollifier import eval_phi

    def exact_cf(th, y0=0.3, eps=0.5):
        # dense Simpson rule over the bump support (smooth integrand)
        x = np.linspace(y0 - 2 * eps, y0 + 2 * eps, 20_001)
        f = eval_phi(eps, None, x - y0) * dn.gaussian_density(x)
        return simpson(f * np.exp(1j * np.outer(th, x)), x=x, axis=1)

    xs = np.linspace(-0.2, 0.8, 21)
    errs = []
    for cut in (12.0, 24.0, 48.0):
        th = cf.inversion_thetas(cut, 129)
        p = dn.levy_invert(table(th, exact_cf(th)), xs, cut)
        errs.append(np.max(np.abs(p.values - dn.gaussian_density(xs))))
    assert errs[0] > errs[1] > errs[2]


def test_scaling_commutes_with_inversion(normal_samples):
    th = cf.inversion_thetas(16.0, 129)
    t = cf.localized_charfn(normal_samples[:50_000], th, 0.1, 0.8)
    xs = np.linspace(-0.7, 0.9, 33)
    direct = dn.levy_invert(t, xs, 16.0)
    two_step = dn.invert_localized(t, xs, 16.0)
    np.testing.assert_allclose(two_step.values, direct.values, rtol=0, atol=1e-12)


@settings(max_examples=20)
@given(seed=st.integers(0, 1000), k=st.floats(-3, 3))
def test_linearity_with_cubic_resampling(seed, k):
    th = cf.inversion_thetas(8.0, 65)
    g = np.random.default_rng(seed)
    a = table(th, g.normal(size=len(th)) + 1j * g.normal(size=len(th)))
    b = table(th, g.normal(size=len(th)) + 1j * g.normal(size=len(th)))
    xs = np.linspace(-1, 1, 9)
    lhs = dn.levy_invert(a.scaled(k) + b, xs, 8.0, interp="cubic").values
    rhs = (k * dn.levy_invert(a, xs, 8.0, interp="cubic").values
           + dn.levy_invert(b, xs, 8.0, interp="cubic").values)
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12 * (1 + abs(k)))


def test_integral_at_most_one():
    xs = np.linspace(-8, 8, 801)
    p = dn.levy_invert(gauss_table(), xs, 8.0)
    assert p.integral() <= 1 + 1e-6


def test_tail_model_budget_and_divergence():
    th = cf.inversion_thetas(50.0, 129)
    t = table(th, np.minimum(1.0, np.maximum(th, 1.0) ** -1.5))
    p = dn.levy_invert(t, [0.0], 50.0, tail=("power", 1.0, 0.5))
    assert p.tail_error_bound == pytest.approx(50.0**-0.5 / (0.5 * math.pi))
    with pytest.raises(TailDivergence):
        dn.levy_invert(t, [0.0], 50.0, tail=("power", 1.0, 0.0))


def test_rejects_short_table():
    with pytest.raises(InvalidParams):
        dn.levy_invert(gauss_table(8.0), [0.0], 20.0)


def test_holder_constant_profile():
    xs = np.linspace(0, 1, 100)
    p = dn.DensityProfile(xs, np.full(100, 0.3), 8.0, 0.0)
    assert dn.holder_modulus(p, 0.5).empirical_modulus == 0.0


def test_holder_gaussian_within_bound():
    xs = np.linspace(-1, 1, 201)
    r = dn.holder_modulus(dn.levy_invert(gauss_table(), xs, 8.0), 0.5)
    assert math.isfinite(r.integral_bound) and not r.diverges and r.within_bound
    # oracle: the untruncated integral (2^0.5 / pi) int_0^inf theta^0.5 e^(-theta^2/2)
    from scipy.integrate import quad

    full = 2**0.5 / math.pi * quad(lambda t: t**0.5 * math.exp(-t * t / 2), 0, np.inf)[0]
    # trapezoid error from the sqrt singularity at theta = 0 is O(h^1.5)
    assert r.integral_bound == pytest.approx(full, rel=5e-5)


def test_holder_divergence_flags():
    th = cf.inversion_thetas(200.0, 257)
    t = table(th, np.minimum(1.0, np.maximum(th, 1.0) ** -1.5))
    xs = np.linspace(-1, 1, 101)
    p = dn.levy_invert(t, xs, 200.0)
    assert dn.holder_modulus(p, 0.6, tail=("power", 1.0, 0.5)).diverges
    assert dn.holder_modulus(p, 0.6).diverges
    assert not dn.holder_modulus(p, 0.3, tail=("power", 1.0, 0.5)).diverges
    growth = dn.holder_bound_growth(t, 0.6, [25.0, 50.0, 100.0, 200.0])
    assert np.all(np.diff(growth) > 0)
    # increments scale like cutoff^(alpha - gamma) = cutoff^0.1
    inc = np.diff(growth)
    assert math.log(inc[-1] / inc[-2], 2) == pytest.approx(0.1, abs=0.02)


def test_goal_implies_finite_bound_below_gamma():
    th = cf.inversion_thetas(100.0, 129)
    t = table(th, np.minimum(1.0, 2.0 * np.maximum(th, 1.0) ** -1.5))
    assert cf.check_goal_criterion(t, 2.0, 0.5).passed
    p = dn.levy_invert(t, np.linspace(-1, 1, 101), 100.0)
    for a in (0.1, 0.3, 0.49):
        assert math.isfinite(dn.holder_modulus(p, a, tail=("power", 2.0, 0.5)).integral_bound)


def test_kde_point_mass_is_kernel():
    xs = np.linspace(-1, 3, 41)
    p = dn.kde_oracle(np.full(10, 1.0), 0.2, xs)
    # samples beyond 8 bandwidths are dropped by design
    np.testing.assert_allclose(p.values, dn.gaussian_density(xs, 1.0, 0.04), rtol=1e-12,
                               atol=1e-14)


def test_kde_standard_normal():
    s = np.random.default_rng(9).standard_normal(1_000_000)
    xs = np.linspace(-2, 2, 81)
    p = dn.kde_oracle(s, 0.05, xs)
    assert np.max(np.abs(p.values - dn.gaussian_density(xs))) <= 5e-3


def test_csv_roundtrip(tmp_path):
    p = dn.levy_invert(gauss_table(), np.linspace(-1, 1, 11), 8.0, tail=("power", 1.0, 2.0))
    f = tmp_path / "density.csv"
    p.to_csv(f)
    back = dn.DensityProfile.from_csv(f)
    np.testing.assert_array_equal(back.values, p.values)
    assert back.tail_error_bound == p.tail_error_bound
    assert back.quadrature_error_bound == p.quadrature_error_bound
    assert (tmp_path / "density.json").exists()
