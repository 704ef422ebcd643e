"""Localized characteristic function, its decay fit and the theta/delta bookkeeping.

``phi_hat(theta) = E[exp(i theta X_t) phi_eps(X_t - y0)]`` is estimated by
Monte Carlo. Its mass ``m0 = phi_hat(0)`` and the polynomial decay
``|phi_hat(theta)| <= 1 ^ C |theta|^-(1 + gamma)`` drive the local density
results in :mod:`holderlab.density`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ._accel import run_blocks
from .errors import (EmptyWindow, InsufficientSignal, InvalidParams, ThetaTooSmall)
from .kernels import impl
from .mollifier import phi_pack
from .stats import line_fit

PLAUSIBILITY_CAP = 1e3


def geometric_thetas(theta_max, per_decade=32, theta_min=1.0):
    """Geometric grid on ``[theta_min, theta_max]`` with ``per_decade`` points per decade."""
    if not 0 < theta_min < theta_max:
        raise InvalidParams("need 0 < theta_min < theta_max")
    n = int(math.ceil(per_decade * math.log10(theta_max / theta_min))) + 1
    return np.geomspace(theta_min, theta_max, n)


def inversion_thetas(cutoff, n_uniform=257, per_decade=32):
    """Uniform grid on ``[0, min(cutoff, 16)]`` joined with a geometric grid up to ``cutoff``.

    The uniform part resolves the oscillation of the cf phase near the
    origin; the geometric part carries the decay out to the cutoff.
    """
    top = min(cutoff, 16.0)
    th = np.linspace(0.0, top, n_uniform)
    if cutoff > top:
        th = np.concatenate([th, geometric_thetas(cutoff, per_decade, top)[1:]])
    return th


@dataclass
class CharFnTable:
    """Monte Carlo estimates of the localized cf on a theta grid.

    Attributes
    ----------
    thetas : ndarray
        Sorted frequencies.
    estimates : ndarray of complex
    std_errors : ndarray
        Max of the real and imaginary component SEs.
    n_paths : int
    localization : tuple
        ``(y0, eps, a)``.
    t : float or None
    m0 : float or None
        Localized mass from the same samples.
    """

    thetas: np.ndarray
    estimates: np.ndarray
    std_errors: np.ndarray
    n_paths: int
    localization: tuple = (0.0, 1.0, None)
    t: float | None = None
    m0: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.thetas = np.asarray(self.thetas, dtype=np.float64)
        self.estimates = np.asarray(self.estimates, dtype=np.complex128)
        self.std_errors = np.asarray(self.std_errors, dtype=np.float64)
        if not (self.thetas.shape == self.estimates.shape == self.std_errors.shape):
            raise InvalidParams("thetas, estimates and std_errors must have equal length")
        if len(self.thetas) > 1 and np.any(np.diff(self.thetas) <= 0):
            raise InvalidParams("thetas must be strictly increasing")

    @property
    def modulus(self):
        return np.abs(self.estimates)

    @property
    def noise_floor(self):
        return 1.0 / math.sqrt(self.n_paths)

    def scaled(self, k):
        """Table with estimates and SEs multiplied by ``k``."""
        m0 = None if self.m0 is None else self.m0 * k
        return CharFnTable(self.thetas, self.estimates * k, self.std_errors * abs(k),
                           self.n_paths, self.localization, self.t, m0, dict(self.meta))

    def __add__(self, other):
        if not np.array_equal(self.thetas, other.thetas):
            raise InvalidParams("tables must share the theta grid")
        m0 = None if self.m0 is None or other.m0 is None else self.m0 + other.m0
        return CharFnTable(self.thetas, self.estimates + other.estimates,
                           np.hypot(self.std_errors, other.std_errors),
                           min(self.n_paths, other.n_paths), self.localization, self.t, m0)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["theta", "re", "im", "se", "n_paths"])
            for th, e, s in zip(self.thetas, self.estimates, self.std_errors):
                w.writerow([repr(float(th)), repr(float(e.real)), repr(float(e.imag)),
                            repr(float(s)), self.n_paths])

    @classmethod
    def from_csv(cls, path, localization=(0.0, 1.0, None), t=None):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1] + 1j * data[:, 2], data[:, 3], int(data[0, 4]),
                   localization, t)


def _cf_sums(samples, thetas, y0, eps, a, weights):
    x = np.ascontiguousarray(samples, dtype=np.float64)
    n = len(x)
    w = np.ones(n) if weights is None else np.ascontiguousarray(weights, dtype=np.float64)
    if w.shape != x.shape:
        raise InvalidParams("weights must match samples")
    th = np.ascontiguousarray(thetas, dtype=np.float64)
    pp = phi_pack(eps, a)
    kern = impl()

    def work(s, e):
        out = np.zeros((len(th) + 1, 4))
        kern.charfn_block(x[s:e], w[s:e], th, pp, float(y0), out)
        return out

    parts = run_blocks(work, n)
    total = np.zeros((len(th) + 1, 4))
    for p in parts:
        total += p
    return total, n


def localized_mass(samples, y0, eps, a=None, weights=None):
    """``m0``: mean of ``w phi_eps(x - y0)``, accumulated exactly like the theta = 0 row."""
    total, n = _cf_sums(samples, np.zeros(0), y0, eps, a, weights)
    return float(total[0, 0] / n)


def localized_charfn(samples, thetas, y0, eps, a=None, weights=None, t=None):
    """Estimate the localized characteristic function.

    Parameters
    ----------
    samples : ndarray
        Draws of ``X_t`` (under Q, or under P when ``weights`` holds Z).
    thetas : array_like
        Frequencies, strictly increasing.
    y0, eps, a : float
        Localization; ``a`` defaults to ``1.5 eps``.
    weights : ndarray, optional
        Per-sample weights.
    t : float, optional
        Recorded in the table.

    Returns
    -------
    CharFnTable
    """
    thetas = np.asarray(thetas, dtype=np.float64)
    if thetas.size == 0:
        raise InvalidParams("thetas must be nonempty")
    total, n = _cf_sums(samples, thetas, y0, eps, a, weights)
    k = len(thetas)
    mre = total[:k, 0] / n
    mim = total[:k, 1] / n
    if n > 1:
        vre = np.maximum(total[:k, 2] / n - mre * mre, 0.0) * n / (n - 1)
        vim = np.maximum(total[:k, 3] / n - mim * mim, 0.0) * n / (n - 1)
        se = np.sqrt(np.maximum(vre, vim) / n)
    else:
        se = np.full(k, np.inf)
    aa = 1.5 * eps if a is None else a
    return CharFnTable(thetas, mre + 1j * mim, se, n, (float(y0), float(eps), float(aa)), t,
                       float(total[k, 0] / n))


@dataclass(frozen=True)
class DecayFit:
    """Power-law fit ``|phi_hat| ~ C_hat theta^-(1 + gamma_hat)``.

    Attributes
    ----------
    C_hat, gamma_hat : float
    ci_gamma : tuple
        Bootstrap interval.
    theta_range : tuple
        Admissible thetas used in the fit.
    noise_floor : float
    curvature : float
        Quadratic coefficient of ``log |phi|`` in ``log theta``.
    curvature_se : float
    power_law : bool
        False when the residual curvature is significantly concave.
    n_points : int
    """

    C_hat: float
    gamma_hat: float
    ci_gamma: tuple
    theta_range: tuple
    noise_floor: float
    curvature: float
    curvature_se: float
    power_law: bool
    n_points: int

    def as_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def admissible(table, min_theta=1.0):
    """Mask of thetas usable for decay fitting.

    Keeps ``theta >= min_theta`` with modulus at least three SEs and at least
    three times the noise floor ``1 / sqrt(n_paths)``.
    """
    mod = table.modulus
    return ((table.thetas >= min_theta) & (mod >= 3.0 * table.std_errors)
            & (mod >= 3.0 * table.noise_floor) & (mod > 0))


def fit_decay(table, min_points=6, n_boot=500, seed=0, level=0.95):
    """Least-squares fit of ``log |phi_hat|`` against ``log theta`` on admissible points.

    Raises
    ------
    InsufficientSignal
        Fewer than ``min_points`` admissible points.
    """
    ok = admissible(table)
    th = table.thetas[ok]
    if len(th) < min_points:
        big = table.thetas[(table.thetas >= 1.0) & (table.modulus >= 3.0 * table.noise_floor)]
        mx = float(big.max()) if len(big) else float("nan")
        raise InsufficientSignal(
            f"{len(th)} admissible points above the noise floor, need {min_points}",
            table.noise_floor, mx)
    lx = np.log(th)
    ly = np.log(table.modulus[ok])
    fit = line_fit(lx, ly)
    gen = np.random.default_rng(seed)
    reps = []
    for _ in range(n_boot):
        idx = gen.integers(0, len(lx), len(lx))
        if np.ptp(lx[idx]) == 0:
            continue
        reps.append(-line_fit(lx[idx], ly[idx]).slope - 1.0)
    lo, hi = np.quantile(reps, [0.5 - level / 2, 0.5 + level / 2])
    curv, curv_se = _curvature(lx, ly)
    power_law = not (curv < 0 and abs(curv) > 3.0 * curv_se and abs(curv) > 1e-8)
    return DecayFit(float(math.exp(fit.intercept)), float(-fit.slope - 1.0),
                    (float(lo), float(hi)), (float(th[0]), float(th[-1])), table.noise_floor,
                    curv, curv_se, bool(power_law), int(len(th)))


def _curvature(lx, ly):
    n = len(lx)
    if n < 4:
        return 0.0, math.inf
    u = lx - lx.mean()
    A = np.column_stack([np.ones(n), u, u * u])
    coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    r = ly - A @ coef
    s2 = float(r @ r) / (n - 3)
    cov = s2 * np.linalg.inv(A.T @ A)
    return float(coef[2]), float(math.sqrt(max(cov[2, 2], 0.0)))


@dataclass
class GoalReport:
    """Per-theta check of ``|phi_hat| - 3 SE <= min(1, C theta^-(1 + gamma))``."""

    thetas: np.ndarray
    margins: np.ndarray
    passed: bool
    first_violation: float | None
    C: float
    gamma: float
    implausible_C: bool

    def as_dict(self):
        return {"C": self.C, "gamma": self.gamma, "pass": self.passed,
                "first_violation": self.first_violation, "implausible_C": self.implausible_C,
                "n_thetas": int(len(self.thetas)),
                "min_margin": float(self.margins.min()) if len(self.margins) else None}


def check_goal_criterion(table, C, gamma, cap=PLAUSIBILITY_CAP):
    """Check the target decay inequality on every theta >= 1 of the table.

    Margins are ``min(1, C theta^-(1+gamma)) - (|phi_hat| - 3 SE)``; the check
    passes when all are non-negative. ``C`` above ``cap`` is flagged since it
    makes the check vacuous on any finite grid.
    """
    if not (C > 0 and gamma > 0):
        raise InvalidParams("need C > 0 and gamma > 0")
    sel = table.thetas >= 1.0
    th = table.thetas[sel]
    rhs = np.minimum(1.0, C * th ** (-(1.0 + gamma)))
    margins = rhs - (table.modulus[sel] - 3.0 * table.std_errors[sel])
    bad = np.nonzero(margins < 0)[0]
    first = float(th[bad[0]]) if len(bad) else None
    return GoalReport(th, margins, len(bad) == 0, first, float(C), float(gamma), C > cap)


def beta_window(alpha, gamma):
    """Open interval ``(2 (1 + gamma) / (1 + alpha), 2)`` of admissible beta.

    The lower end is the correctly rounded value of the exact rational
    expression in the float inputs.

    Raises
    ------
    EmptyWindow
        When ``gamma >= alpha``.
    """
    if not 0 < alpha < 1:
        raise InvalidParams("alpha must lie in (0, 1)")
    if gamma < 0:
        raise InvalidParams("gamma must be >= 0")
    if gamma >= alpha:
        raise EmptyWindow(f"gamma = {gamma} >= alpha = {alpha}: no beta below 2")
    lo = Fraction(2) * (1 + Fraction(gamma)) / (1 + Fraction(alpha))
    return float(lo), 2.0


def delta_schedule(theta, beta, t):
    """``delta = |theta|^-beta``, requiring ``|theta| > min(t, 1)^(-1/beta)``."""
    if not 0 < beta < 2:
        raise InvalidParams("beta must lie in (0, 2)")
    if not t > 0:
        raise InvalidParams("t must be positive")
    th = abs(float(theta))
    lim = min(t, 1.0) ** (-1.0 / beta)
    if not th > lim:
        raise ThetaTooSmall(f"|theta| = {th} must exceed (t ^ 1)^(-1/beta) = {lim}")
    return th ** (-beta)


@dataclass(frozen=True)
class BoundParams:
    """Constants of the four-term bound; the unknown ones default to 1.

    ``factor`` is the leading 2 on the localization term, kept explicit.
    ``C_alpha`` of ``None`` means: compute it from the coefficients.
    """

    n: int = 1
    n2: int = 1
    K_n: float = 1.0
    M_n: float = 1.0
    C_eps_n2: float = 1.0
    C_tilde_eps_n2: float = 1.0
    C_alpha: float | None = None
    factor: float = 2.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1 or int(self.n2) != self.n2 or self.n2 < 1:
            raise InvalidParams("n and n2 must be positive integers")
        for k in ("K_n", "M_n", "C_eps_n2", "C_tilde_eps_n2", "factor"):
            if not getattr(self, k) > 0:
                raise InvalidParams(f"{k} must be positive")
        if self.C_alpha is not None and not self.C_alpha >= 0:
            raise InvalidParams("C_alpha must be >= 0")


@dataclass(frozen=True)
class BoundTerms:
    localization: float
    ibp: float
    holder: float
    drift_ibp: float

    @property
    def total(self):
        return self.localization + self.ibp + self.holder + self.drift_ibp

    def as_dict(self):
        return {"localization": self.localization, "ibp": self.ibp, "holder": self.holder,
                "drift_ibp": self.drift_ibp, "total": self.total}


def est7_bound(params, theta, delta, tc, t=None):
    """Evaluate the four terms bounding ``|phi_hat(theta)|`` for window length ``delta``.

    ``2 eps^-2n K_n (M_n |sigma_bar|^2n delta^n + delta^2n |b_bar|^2n)``,
    ``C_eps |theta delta^1/2|^-n2``, ``C_alpha delta^((1+alpha)/2)`` and
    ``|psi| C_tilde |theta delta^1/2|^-n2``.
    """
    from .girsanov import compute_C_alpha

    s = tc.spec
    tt = s.t if t is None else t
    if not 0 < delta < min(tt, 1.0):
        raise InvalidParams("need 0 < delta < min(t, 1)")
    p = params
    n = p.n
    loc = p.factor * s.eps ** (-2 * n) * p.K_n * (
        p.M_n * tc.sup_sigma_bar ** (2 * n) * delta**n + delta ** (2 * n) * tc.sup_b_bar ** (2 * n))
    osc = abs(theta * math.sqrt(delta)) ** (-p.n2)
    ca = p.C_alpha if p.C_alpha is not None else compute_C_alpha(tc, delta, s.alpha)[0]
    return BoundTerms(float(loc), float(p.C_eps_n2 * osc),
                     float(ca * delta ** (0.5 * (1.0 + s.alpha))),
                     float(tc.sup_psi * p.C_tilde_eps_n2 * osc))


def bound_exponents(n, n2, beta, alpha):
    """Theta exponents of the four terms under ``delta = theta^-beta``."""
    return (-n * beta, -2 * n * beta, -(2.0 - beta) * n2 / 2.0, -(1.0 + alpha) * beta / 2.0)
