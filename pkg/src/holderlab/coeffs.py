"""SDE coefficients, assumption checks and the truncated coefficients.

Coefficients are sums of analytic primitives (:class:`Expr`) so that the
compiled kernels can evaluate them and their first two derivatives without
calling back into Python.

The truncation map is ``lambda(y) = y0 + sign(y - y0) h(|y - y0|)`` with

    h(r) = r (1 - G(r)) + 5 eps G(r),    G = g_{4 eps, 5 eps},

which is the identity for ``r <= 4 eps``, equals ``5 eps`` for
``r >= 5 eps``, and is smooth and nondecreasing in between because
``h'(r) = (1 - G) + (5 eps - r) G' >= 0``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParams, ValidationFailure
from .kernels import _np_core
from .mollifier import ramp_pack

KINDS = {"const": 0, "poly": 1, "sin": 2, "cos": 3, "abspow": 4, "clip": 5, "weier": 6}
KIND_NAMES = {v: k for k, v in KINDS.items()}


@dataclass(frozen=True)
class Expr:
    """Sum of analytic terms ``(kind, c, p1, p2)``.

    ===========  =============================
    kind         term
    ===========  =============================
    ``const``    ``c``
    ``poly``     ``c (x - p1)^p2``, integer ``p2 >= 0``
    ``sin``      ``c sin(p1 x + p2)``
    ``cos``      ``c cos(p1 x + p2)``
    ``abspow``   ``c |x - p1|^p2``, ``p2 > 0``
    ``clip``     ``c clip(x, p1, p2)``
    ``weier``    ``c sum_{k < p2} p1^k cos(2^k x)``
    ===========  =============================
    """

    terms: tuple = ()

    def __post_init__(self):
        clean = []
        for t in self.terms:
            if len(t) != 4:
                raise InvalidParams(f"term needs 4 entries (kind, c, p1, p2), got {t!r}")
            kind, c, p1, p2 = t
            if kind not in KINDS:
                raise InvalidParams(f"unknown term kind {kind!r}")
            c, p1, p2 = float(c), float(p1), float(p2)
            if not all(np.isfinite(v) for v in (c, p1, p2)):
                raise InvalidParams(f"non-finite term parameter in {t!r}")
            if kind == "poly" and (p2 < 0 or p2 != int(p2)):
                raise InvalidParams("poly power must be a non-negative integer")
            if kind == "abspow" and p2 <= 0:
                raise InvalidParams("abspow power must be positive")
            if kind == "clip" and p1 > p2:
                raise InvalidParams("clip needs lo <= hi")
            if kind == "weier" and not (0 < p1 < 1 and p2 >= 1 and p2 == int(p2)):
                raise InvalidParams("weier needs 0 < ratio < 1 and an integer term count >= 1")
            clean.append((kind, c, p1, p2))
        object.__setattr__(self, "terms", tuple(clean))

    @classmethod
    def const(cls, c):
        return cls((("const", c, 0.0, 0.0),))

    @classmethod
    def poly(cls, c, center, power):
        return cls((("poly", c, center, power),))

    @classmethod
    def sin(cls, c=1.0, freq=1.0, phase=0.0):
        return cls((("sin", c, freq, phase),))

    @classmethod
    def cos(cls, c=1.0, freq=1.0, phase=0.0):
        return cls((("cos", c, freq, phase),))

    @classmethod
    def abspow(cls, c, center, power):
        return cls((("abspow", c, center, power),))

    @classmethod
    def clip(cls, c, lo, hi):
        return cls((("clip", c, lo, hi),))

    @classmethod
    def weierstrass(cls, c, alpha, n_terms=12):
        """``c sum_{k < n_terms} 2^(-k alpha) cos(2^k x)``, alpha-Holder uniformly in ``n_terms``."""
        return cls((("weier", c, 2.0 ** (-alpha), n_terms),))

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Expr.const(other)
        return Expr(self.terms + other.terms)

    __radd__ = __add__

    def __mul__(self, k):
        k = float(k)
        return Expr(tuple((kind, c * k, p1, p2) for kind, c, p1, p2 in self.terms))

    __rmul__ = __mul__

    @functools.cached_property
    def table(self):
        """``(n, 4)`` float array for the kernels."""
        if not self.terms:
            return np.zeros((0, 4))
        t = np.array([[KINDS[k], c, p1, p2] for k, c, p1, p2 in self.terms], dtype=np.float64)
        t.setflags(write=False)
        return t

    @property
    def is_constant(self):
        return all(k == "const" or (k == "poly" and p2 == 0) or c == 0.0
                   for k, c, _, p2 in self.terms)

    def __call__(self, x):
        v = _np_core.expr(self.table, x, 0)[0]
        return float(v) if np.ndim(x) == 0 else v

    def derivs(self, x):
        """Value, first and second derivative."""
        return _np_core.expr(self.table, x, 1)

    def to_list(self):
        return [[k, c, p1, p2] for k, c, p1, p2 in self.terms]

    @classmethod
    def from_list(cls, items):
        try:
            return cls(tuple(tuple(t) for t in items))
        except TypeError as exc:
            raise InvalidParams(f"cannot parse expression {items!r}") from exc


@dataclass(frozen=True)
class CoefficientSpec:
    """SDE ``dX = b(X) dt + sigma(X) dB`` with its locality window.

    Parameters
    ----------
    sigma, b : Expr
        Diffusion and drift.
    x0 : float
        Initial value.
    y0, eps : float
        Window centre and unit; assumptions are checked on ``B_{6 eps}(y0)``.
    sigma0 : float
        Ellipticity floor, ``|sigma| > sigma0`` on the window.
    alpha : float
        Holder exponent of ``b / sigma`` in (0, 1).
    holder_const : float
        Declared Holder constant of ``b / sigma``.
    T, t : float
        Horizon and evaluation time, ``0 < t <= T``.
    sigma_bound, b_bound : float, optional
        Declared sup bounds on the window, checked when given.
    """

    sigma: Expr
    b: Expr
    x0: float
    y0: float
    eps: float
    sigma0: float
    alpha: float
    holder_const: float = 1.0
    T: float = 1.0
    t: float = 1.0
    sigma_bound: float | None = None
    b_bound: float | None = None

    def __post_init__(self):
        if not isinstance(self.sigma, Expr) or not isinstance(self.b, Expr):
            raise InvalidParams("sigma and b must be Expr instances")
        if not self.eps > 0:
            raise InvalidParams(f"eps must be > 0, got {self.eps}")
        if not self.sigma0 > 0:
            raise InvalidParams(f"sigma0 must be > 0, got {self.sigma0}")
        if not 0 < self.alpha < 1:
            raise InvalidParams(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.holder_const >= 0:
            raise InvalidParams("holder_const must be >= 0")
        if not (self.T > 0 and 0 < self.t <= self.T):
            raise InvalidParams(f"need 0 < t <= T, got t={self.t}, T={self.T}")


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate_assumptions`."""

    passed: bool
    inf_sigma: float
    sup_sigma: float
    sup_b: float
    holder_quotient: float
    grid_n: int
    clause: str | None = None
    point: object = None
    message: str = ""


def holder_quotient(x, f, alpha, chunk=512):
    """Max over grid pairs of ``|f(x) - f(y)| / |x - y|^alpha``, with the argmax pair."""
    x = np.asarray(x, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    best = 0.0
    pair = (float(x[0]), float(x[0]))
    for s in range(0, len(x), chunk):
        xs = x[s:s + chunk, None]
        fs = f[s:s + chunk, None]
        dx = np.abs(xs - x[None, :])
        df = np.abs(fs - f[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(dx > 0, df / dx**alpha, 0.0)
        k = int(np.argmax(q))
        if q.flat[k] > best:
            best = float(q.flat[k])
            i, j = divmod(k, len(x))
            pair = (float(x[s + i]), float(x[j]))
    return best, pair


def validate_assumptions(spec, grid_n=1001, strict=True):
    """Check ellipticity, boundedness and Holder continuity on ``B_{6 eps}(y0)``.

    Parameters
    ----------
    spec : CoefficientSpec
    grid_n : int
        Number of sample points (>= 100) in the open ball.
    strict : bool
        Raise :class:`ValidationFailure` on failure (default) instead of
        returning a failed report.

    Returns
    -------
    ValidationReport
    """
    if grid_n < 100:
        raise InvalidParams("grid_n must be >= 100")
    r = 6.0 * spec.eps
    x = np.linspace(spec.y0 - r, spec.y0 + r, grid_n + 2)[1:-1]
    sig = np.abs(spec.sigma(x))
    bv = spec.b(x)
    inf_s, sup_s, sup_b = float(sig.min()), float(sig.max()), float(np.abs(bv).max())
    fail = None
    if not np.all(np.isfinite(sig)) or not np.all(np.isfinite(bv)):
        k = int(np.argmax(~(np.isfinite(sig) & np.isfinite(bv))))
        fail = ("H1", float(x[k]), "coefficient not finite")
    elif inf_s <= spec.sigma0:
        k = int(np.argmin(sig))
        fail = ("H1", float(x[k]), f"|sigma| = {sig[k]:.6g} <= sigma0 = {spec.sigma0}")
    elif spec.sigma_bound is not None and sup_s > spec.sigma_bound:
        k = int(np.argmax(sig))
        fail = ("H1", float(x[k]), f"|sigma| = {sig[k]:.6g} exceeds declared bound")
    elif spec.b_bound is not None and sup_b > spec.b_bound:
        k = int(np.argmax(np.abs(bv)))
        fail = ("H1", float(x[k]), f"|b| = {abs(bv[k]):.6g} exceeds declared bound")
    q = 0.0
    if fail is None:
        q, pair = holder_quotient(x, bv / spec.sigma(x), spec.alpha)
        if q > spec.holder_const * 1.01:
            fail = ("H3", pair, f"Holder quotient {q:.6g} > 1.01 x {spec.holder_const}")
    rep = ValidationReport(fail is None, inf_s, sup_s, sup_b, q, grid_n,
                           *(fail if fail else (None, None, "")))
    if fail is not None and strict:
        err = ValidationFailure(*fail)
        err.report = rep
        raise err
    return rep


def lambda_pack(y0, eps):
    """Kernel pack ``[y0, eps, ramp(4 eps, 5 eps)]`` for the truncation map."""
    if not eps > 0:
        raise InvalidParams("eps must be > 0")
    pack = np.concatenate(([float(y0), float(eps)], ramp_pack(4.0 * eps, 5.0 * eps)))
    pack.setflags(write=False)
    return pack


def truncation_lambda(spec, y, order=0):
    """Truncation map ``lambda(y)``; with ``order`` 1 or 2 also its derivatives.

    Returns the value (``order=0``) or a tuple ``(lambda, lambda', lambda'')``.
    """
    l0, l1, l2 = _np_core.lam(lambda_pack(spec.y0, spec.eps), np.asarray(y, dtype=np.float64))
    if order == 0:
        return float(l0) if np.ndim(y) == 0 else l0
    return l0, l1, l2


def _sup_abs(fn, lo, hi, n=100_000):
    """Dense-grid sup of ``|fn|`` refined by a parabola through the top 3 points."""
    x = np.linspace(lo, hi, n)
    v = np.abs(fn(x))
    k = int(np.argmax(v))
    best = float(v[k])
    if 0 < k < n - 1:
        y0, y1, y2 = v[k - 1], v[k], v[k + 1]
        den = y0 - 2.0 * y1 + y2
        if den < 0:
            off = 0.5 * (y0 - y2) / den
            xv = x[k] + off * (x[1] - x[0])
            best = max(best, float(np.abs(fn(np.array([xv])))[0]))
    return best


@dataclass(frozen=True)
class TruncatedCoeffs:
    """``sigma_bar = sigma o lambda``, ``b_bar = b o lambda`` and ``psi = b_bar / sigma_bar``.

    Attributes
    ----------
    spec : CoefficientSpec
    lam_pack : ndarray
        Kernel pack for lambda.
    sup_sigma_bar, sup_b_bar, sup_psi : float
        Sup norms over the real line (attained on the closed 5 eps ball).
    """

    spec: CoefficientSpec
    lam_pack: np.ndarray = field(repr=False)
    sup_sigma_bar: float
    sup_b_bar: float
    sup_psi: float
    sup_dsigma_bar: float

    @property
    def sigma_table(self):
        return self.spec.sigma.table

    @property
    def b_table(self):
        return self.spec.b.table

    @property
    def sigma_is_constant(self):
        return self.spec.sigma.is_constant

    def sigma_bar(self, x, order=0):
        """``sigma_bar(x)``, or ``(value, d1, d2)`` when ``order > 0``."""
        out = _np_core.coef(self.sigma_table, self.lam_pack, True, x, order)
        return out if order else out[0]

    def b_bar(self, x, order=0):
        out = _np_core.coef(self.b_table, self.lam_pack, True, x, order)
        return out if order else out[0]

    def psi(self, x):
        return self.b_bar(x) / self.sigma_bar(x)


def build_truncated(spec, validate=True):
    """Truncated coefficients for ``spec`` (validated first unless told otherwise)."""
    if validate:
        validate_assumptions(spec)
    lp = lambda_pack(spec.y0, spec.eps)
    lo, hi = spec.y0 - 5.0 * spec.eps, spec.y0 + 5.0 * spec.eps
    sup_s = _sup_abs(spec.sigma, lo, hi)
    sup_b = _sup_abs(spec.b, lo, hi)
    # degenerate sigma (allowed only unvalidated) gives sup_psi = inf
    with np.errstate(divide="ignore", invalid="ignore"):
        sup_p = _sup_abs(lambda x: spec.b(x) / spec.sigma(x), lo, hi)
    lp_ = lp
    sup_ds = _sup_abs(lambda x: _np_core.coef(spec.sigma.table, lp_, True, x, 1)[1],
                      spec.y0 - 6.0 * spec.eps, spec.y0 + 6.0 * spec.eps)
    return TruncatedCoeffs(spec, lp, sup_s, sup_b, sup_p, sup_ds)


def global_holder_quotient(tc, n=2001, width=20.0):
    """Holder quotient of ``psi`` over ``y0 +- (width / 2) eps``."""
    s = tc.spec
    x = np.linspace(s.y0 - 0.5 * width * s.eps, s.y0 + 0.5 * width * s.eps, n)
    return holder_quotient(x, tc.psi(x), s.alpha)[0]
