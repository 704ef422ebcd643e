import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from holderlab.errors import InvalidParams, UnsupportedOrder
from holderlab.mollifier import (BumpParams, Mollifier, eval_f, eval_g, eval_g_deriv,
                                 eval_phi, eval_phi_deriv)

eps_st = st.floats(0.05, 20.0)


def test_f_example():
    assert eval_f(BumpParams(1.0, 2.0), 1.5) == pytest.approx(math.exp(-4.0), rel=1e-15)


def test_f_vanishes_outside():
    p = BumpParams(1.0, 2.0)
    assert np.all(eval_f(p, np.array([-3.0, 1.0, 2.0, 7.0])) == 0.0)


def test_g_midpoint_and_plateaus():
    p = BumpParams(1.0, 2.0)
    assert eval_g(p, 1.5) == pytest.approx(0.5, abs=1e-15)
    assert eval_g(p, 0.3) == 0.0 and eval_g(p, 1.0) == 0.0
    assert eval_g(p, 2.0) == 1.0 and eval_g(p, 9.0) == 1.0
    q = BumpParams(1.0, 2.0, "falling")
    assert eval_g(q, 0.3) == 1.0 and eval_g(q, 9.0) == 0.0


def test_bad_params():
    with pytest.raises(InvalidParams):
        BumpParams(2.0, 1.0)
    with pytest.raises(InvalidParams):
        BumpParams(0.0, 1.0, "sideways")
    with pytest.raises(UnsupportedOrder):
        eval_g_deriv(BumpParams(0.0, 1.0), 0.5, 3)
    with pytest.raises(InvalidParams):
        Mollifier(1.0, 2.5)


@given(a=st.floats(-5, 5), w=st.floats(0.1, 5), u=st.floats(0, 1))
def test_g_symmetry(a, w, u):
    p = BumpParams(a, a + w)
    x = a + u * w
    assert eval_g(p, x) + eval_g(p, 2 * a + w - x) == pytest.approx(1.0, abs=1e-13)


@given(a=st.floats(-5, 5), w=st.floats(0.1, 5))
def test_g_monotone(a, w):
    p = BumpParams(a, a + w)
    x = np.linspace(a - 0.5, a + w + 0.5, 2001)
    g = eval_g(p, x)
    assert np.all(np.diff(g) >= -1e-15)
    assert np.all((g >= 0) & (g <= 1))


@given(eps=eps_st)
def test_phi_sandwich(eps):
    x = np.linspace(-3 * eps, 3 * eps, 10_001)
    v = eval_phi(eps, 1.5 * eps, x)
    inner = np.abs(x) <= eps
    outer = np.abs(x) < 2 * eps
    assert np.all(v[inner] == 1.0)
    assert np.all(v[~outer] == 0.0)
    assert np.all((v >= 0) & (v <= 1))


@given(eps=eps_st, x=st.floats(-50, 50))
def test_phi_even(eps, x):
    assert eval_phi(eps, None, x) == eval_phi(eps, None, -x)


def test_mollifier_examples():
    m = Mollifier(1.0)
    assert m(0.0) == 1.0 and m(1.5) == 1.0 and m(2.5) == 0.0
    assert 0.0 < m(1.75) < 1.0
    assert m(1.75) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("eps", [1.0, 2.0, 5.0])
def test_phi_derivatives_match_differences(eps):
    h = 1e-5
    x = np.linspace(-2.2 * eps, 2.2 * eps, 4001)
    d1 = eval_phi_deriv(eps, None, x, 1)
    d2 = eval_phi_deriv(eps, None, x, 2)
    fd1 = (eval_phi(eps, None, x + h) - eval_phi(eps, None, x - h)) / (2 * h)
    fd2 = (eval_phi_deriv(eps, None, x + h, 1) - eval_phi_deriv(eps, None, x - h, 1)) / (2 * h)
    assert np.max(np.abs(d1 - fd1)) < 1e-5
    assert np.max(np.abs(d2 - fd2)) < 1e-5


def test_g_derivatives_match_differences():
    p = BumpParams(0.0, 1.5)
    h = 1e-5
    x = np.linspace(-0.2, 1.7, 2001)
    fd1 = (eval_g(p, x + h) - eval_g(p, x - h)) / (2 * h)
    fd2 = (eval_g_deriv(p, x + h, 1) - eval_g_deriv(p, x - h, 1)) / (2 * h)
    assert np.max(np.abs(eval_g_deriv(p, x, 1) - fd1)) < 1e-5
    assert np.max(np.abs(eval_g_deriv(p, x, 2) - fd2)) < 1e-5


def test_g_matches_quadrature_oracle():
    # independent oracle: normalized integral of f by adaptive quadrature
    from scipy.integrate import quad

    p = BumpParams(0.0, 1.0)
    total = quad(lambda s: eval_f(p, s), 0.0, 1.0, epsabs=1e-14)[0]
    for x in (0.1, 0.25, 0.6, 0.9):
        part = quad(lambda s: eval_f(p, s), 0.0, x, epsabs=1e-14)[0]
        assert eval_g(p, x) == pytest.approx(part / total, abs=1e-10)


def test_compiled_scalar_matches_numpy():
    from holderlab.kernels import _nb_core, _np_core
    from holderlab.mollifier import phi_pack

    pack = phi_pack(2.0, None)
    x = np.linspace(-5, 5, 301)
    ref = _np_core.phi(pack, x)
    got = np.array([_nb_core.phi(pack, v) for v in x]).T
    np.testing.assert_allclose(got, np.array(ref), rtol=0, atol=1e-12)
