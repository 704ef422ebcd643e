"""Explicit C-infinity bump functions.

``f_{a,r}(x) = exp(1/(x - r) - 1/(x - a))`` on ``(a, r)`` (zero elsewhere),
its normalized integral ``g_{a,r}`` (a smooth ramp from 0 to 1) and the
localizer ``phi_eps = g_{-2eps,-a} * (1 - g_{a,2eps})``.

The ramp is not integrated on the fly. Substituting ``w = 1/(y - a)`` gives

    int_a^x f = f(x) * (x - a)^2 * S(x),
    S(x) = w0^2 exp(-1/(x - r)) int_0^inf e^{-v} exp(1/(a - r + 1/(w0 + v))) / (w0 + v)^2 dv

with ``w0 = 1/(x - a)``. ``S`` is smooth and positive on the left half
``[a, m]`` of the ramp, so it is interpolated once at 1024 Chebyshev nodes
(DCT-II) and the right half follows from the symmetry ``f(2m - x) = f(x)``.
This keeps relative accuracy near the knots, where ``g`` is tiny, and makes
evaluation O(1) inside path loops. Derivatives are closed form:
``g' = f / Z`` and ``g'' = g' * (1/(x - a)^2 - 1/(x - r)^2)``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.fft import dct

from .errors import InvalidParams, UnsupportedOrder
from .kernels import _np_core

N_NODES = 1024
EXP_FLOOR = -700.0

_GL_X, _GL_W = leggauss(64)
_PANELS = ((0.0, 1.0), (1.0, 4.0), (4.0, 16.0), (16.0, 48.0))


@dataclass(frozen=True)
class BumpParams:
    """Knots of a ramp.

    Parameters
    ----------
    a, r : float
        Inner and outer knot, ``a < r``. The ramp is constant outside ``[a, r]``.
    orientation : {"rising", "falling"}
        ``"falling"`` evaluates ``1 - g``.
    """

    a: float
    r: float
    orientation: str = "rising"

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.r)) or self.a >= self.r:
            raise InvalidParams(f"need finite a < r, got a={self.a}, r={self.r}")
        if self.orientation not in ("rising", "falling"):
            raise InvalidParams(f"orientation must be 'rising' or 'falling', got {self.orientation!r}")


def _tail_integral(w0, a, r):
    w0 = np.asarray(w0, dtype=np.float64)[:, None]
    total = 0.0
    for lo, hi in _PANELS:
        v = 0.5 * (hi - lo) * _GL_X + 0.5 * (hi + lo)
        wv = 0.5 * (hi - lo) * _GL_W
        w = w0 + v
        total = total + np.sum(wv * np.exp(-v + 1.0 / (a - r + 1.0 / w)) / (w * w), axis=1)
    return total


@functools.lru_cache(maxsize=256)
def _ramp_pack_cached(a, r):
    h = 0.5 * (r - a)
    u = np.cos(np.pi * (np.arange(N_NODES) + 0.5) / N_NODES)
    t = 0.5 * h * (1.0 + u)
    x = a + t
    w0 = 1.0 / t
    # constant factor exp(-1/h) keeps S representable for narrow ramps
    s = w0 * w0 * np.exp(1.0 / (r - x) - 1.0 / h) * _tail_integral(w0, a, r)
    if not np.all(np.isfinite(s)):
        raise InvalidParams(f"ramp ({a}, {r}) cannot be represented in double precision")
    c = dct(s, type=2) / N_NODES
    c[0] *= 0.5
    scale = np.max(np.abs(c))
    if np.max(np.abs(c[-64:])) > 1e-13 * scale:
        raise InvalidParams(f"ramp ({a}, {r}) too narrow for {N_NODES} Chebyshev nodes")
    keep = int(np.nonzero(np.abs(c) > 1e-15 * scale)[0][-1]) + 1
    c = c[:keep]
    s_mid = float(np.sum(c))
    norm = 2.0 * h * h * s_mid
    pack = np.concatenate(([a, r, h, norm, norm * np.exp(1.0 / h), float(keep)], c))
    pack.setflags(write=False)
    return pack


def ramp_pack(a, r):
    """Flat coefficient pack for the ramp ``g_{a,r}`` (see ``kernels._nb_core``)."""
    BumpParams(a, r)
    return _ramp_pack_cached(float(a), float(r))


@functools.lru_cache(maxsize=128)
def _phi_pack_cached(eps, a):
    rise = ramp_pack(-2.0 * eps, -a)
    fall = ramp_pack(a, 2.0 * eps)
    pack = np.concatenate(([1.0 + len(rise)], rise, fall))
    pack.setflags(write=False)
    return pack


def _check_phi(eps, a):
    if not (np.isfinite(eps) and eps > 0):
        raise InvalidParams(f"eps must be positive, got {eps}")
    if not (eps < a < 2.0 * eps):
        raise InvalidParams(f"need eps < a < 2 eps, got eps={eps}, a={a}")


def phi_pack(eps, a=None):
    """Flat pack for ``phi_eps`` with plateau ``[-a, a]`` (default ``a = 1.5 eps``)."""
    a = 1.5 * eps if a is None else a
    _check_phi(eps, a)
    return _phi_pack_cached(float(eps), float(a))


def _out(x, v):
    return float(v) if np.ndim(x) == 0 else v


def eval_f(p, x):
    """Unnormalized bump ``f_{a,r}(x)``; zero outside ``(a, r)``."""
    if not isinstance(p, BumpParams):
        raise InvalidParams("expected BumpParams")
    xa = np.asarray(x, dtype=np.float64)
    inside = (xa > p.a) & (xa < p.r)
    xi = np.where(inside, xa, 0.5 * (p.a + p.r))
    e = 1.0 / (xi - p.r) - 1.0 / (xi - p.a)
    v = np.where(inside & (e > EXP_FLOOR), np.exp(np.maximum(e, EXP_FLOOR)), 0.0)
    return _out(x, v)


def _ramp_eval(p, x):
    if not isinstance(p, BumpParams):
        raise InvalidParams("expected BumpParams")
    xa = np.asarray(x, dtype=np.float64)
    return xa, _np_core.ramp(ramp_pack(p.a, p.r), 0, xa)


def eval_g(p, x):
    """Smooth ramp: 0 for ``x <= a``, 1 for ``x >= r`` (or the reverse if falling)."""
    xa, (g, _, _) = _ramp_eval(p, x)
    if p.orientation == "falling":
        g = 1.0 - g
    return _out(x, g)


def eval_g_deriv(p, x, order):
    """First or second derivative of :func:`eval_g`."""
    if order not in (1, 2):
        raise UnsupportedOrder(f"order must be 1 or 2, got {order}")
    xa, vals = _ramp_eval(p, x)
    d = vals[order]
    if p.orientation == "falling":
        d = -d
    return _out(x, d)


def eval_phi(eps, a, x):
    """Localizer ``phi_eps(x)``: 1 on ``[-a, a]``, 0 outside ``(-2 eps, 2 eps)``."""
    v, _, _ = _np_core.phi(phi_pack(eps, a), np.asarray(x, dtype=np.float64))
    return _out(x, v)


def eval_phi_deriv(eps, a, x, order):
    """Analytic first or second derivative of ``phi_eps``."""
    if order not in (1, 2):
        raise UnsupportedOrder(f"order must be 1 or 2, got {order}")
    vals = _np_core.phi(phi_pack(eps, a), np.asarray(x, dtype=np.float64))
    return _out(x, vals[order])


@dataclass(frozen=True)
class Mollifier:
    """Callable ``phi_eps`` with cached coefficient pack.

    Examples
    --------
    >>> m = Mollifier(1.0)
    >>> m(0.0), m(2.5)
    (1.0, 0.0)
    """

    eps: float
    a: float | None = None

    def __post_init__(self):
        if self.a is None:
            object.__setattr__(self, "a", 1.5 * self.eps)
        _check_phi(self.eps, self.a)

    @property
    def pack(self):
        return phi_pack(self.eps, self.a)

    def __call__(self, x):
        return eval_phi(self.eps, self.a, x)

    def deriv(self, x, order):
        return eval_phi_deriv(self.eps, self.a, x, order)

    def all(self, x):
        """Value, first and second derivative as arrays."""
        return _np_core.phi(self.pack, np.asarray(x, dtype=np.float64))
