"""Change of measure over the localization window.

Under P the localized process is driftless, ``dX-bar = sigma_bar(X-bar) dW``,
and

    Z_t = exp( sum psi(X-bar_k) dW_k - 1/2 sum psi(X-bar_k)^2 dt ),

with ``psi = b_bar / sigma_bar`` evaluated at left points. The product form
``prod (1 + psi(X-bar_k) dW_k)`` is the Euler solution of
``dZ = Z psi(X-bar) dW``. The W-form with ``-1/2`` is primary; writing
``dB = dW - psi du`` turns it into the ``+1/2`` form driven by B.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from ._accel import run_blocks
from .errors import InvalidParams, OverflowGuard
from .kernels import impl
from .sde import SimGrid, simulate_euler
from .stats import loglog_fit

LOG_LIMIT = 700.0


@dataclass
class GirsanovWeights:
    """Per-path weights of one window.

    Attributes
    ----------
    z : ndarray
        Exponential-form ``Z_t``.
    log_z : ndarray
    z_sde : ndarray
        Euler product form of ``dZ = Z psi dW``.
    delta : float
    psi_sup : float
        ``||psi||_inf`` of the truncated coefficients.
    """

    z: np.ndarray
    log_z: np.ndarray
    z_sde: np.ndarray
    delta: float
    psi_sup: float

    @property
    def rel_gap(self):
        """Path-wise relative gap ``|z_sde - z| / z``."""
        return np.abs(self.z_sde - self.z) / self.z

    def mean_se(self):
        n = len(self.z)
        return float(self.z.mean()), float(self.z.std(ddof=1) / math.sqrt(n))


@dataclass
class WindowSample:
    """Localized window paths started at ``y`` together with their weights."""

    y: np.ndarray
    x_terminal: np.ndarray
    w_increment: np.ndarray
    weights: GirsanovWeights
    i6: np.ndarray
    states: np.ndarray | None
    grid: SimGrid


def _check_log(log_z, tc, delta):
    big = np.abs(log_z) > LOG_LIMIT
    if big.any():
        i = int(np.argmax(big))
        raise OverflowGuard(f"|log Z| = {abs(log_z[i]):.1f} > {LOG_LIMIT} on path {i}; "
                            f"psi_sup * delta = {tc.sup_psi * delta:.3g}, "
                            f"psi_sup^2 * delta = {tc.sup_psi**2 * delta:.3g}")


def simulate_window(tc, y, delta, m, n_paths, seed, drift=False, record=False,
                    stream=rng.STREAM_WINDOW, t=None):
    """Simulate ``X-bar`` from ``y`` over a window of length ``delta`` with ``m`` steps.

    Parameters
    ----------
    tc : TruncatedCoeffs
    y : float or ndarray
        Start value(s).
    drift : bool
        ``False`` simulates under P (driftless), ``True`` under Q.
    record : bool
        Keep the path states.
    t : float, optional
        Window end, used only for the returned grid (defaults to ``delta``).

    Returns
    -------
    WindowSample
    """
    if not delta > 0 or m < 1:
        raise InvalidParams("need delta > 0 and m >= 1")
    n = int(n_paths)
    ys = np.broadcast_to(np.asarray(y, dtype=np.float64), (n,)).copy()
    k0, k1 = rng.seed_key(seed)
    dt = delta / m
    xT, lz, zs, i6, sw = (np.empty(n) for _ in range(5))
    X = np.empty((n, m + 1)) if record else np.empty((0, 0))
    kern = impl()

    def work(s, e):
        kern.window_block(tc.sigma_table, tc.b_table, tc.lam_pack, ys[s:e], dt, m, k0, k1,
                          stream, s, 0, bool(drift), X[s:e] if record else X, xT[s:e],
                          lz[s:e], zs[s:e], i6[s:e], sw[s:e])

    run_blocks(work, n)
    _check_log(lz, tc, delta)
    w = GirsanovWeights(np.exp(lz), lz, zs, float(delta), tc.sup_psi)
    end = delta if t is None else t
    return WindowSample(ys, xT, sw, w, i6, X if record else None, SimGrid(end - delta, end, m))


def girsanov_weight(paths, increments, tc, delta):
    """Weights along recorded driftless paths.

    Parameters
    ----------
    paths : ndarray, shape (n_paths, m + 1) or (m + 1,)
        States of X-bar on the window grid.
    increments : ndarray, shape (n_paths, m) or (m,)
        The W increments that produced ``paths``.
    tc : TruncatedCoeffs
    delta : float
        Window length; ``dt = delta / m``.

    Returns
    -------
    GirsanovWeights
    """
    x = np.atleast_2d(np.asarray(paths, dtype=np.float64))
    dw = np.atleast_2d(np.asarray(increments, dtype=np.float64))
    m = dw.shape[1]
    if x.shape[1] != m + 1:
        raise InvalidParams("paths need one more column than increments")
    dt = delta / m
    ps = tc.psi(x[:, :-1].ravel()).reshape(x.shape[0], m)
    lz = np.sum(ps * dw - 0.5 * ps * ps * dt, axis=1)
    _check_log(lz, tc, delta)
    zs = np.prod(1.0 + ps * dw, axis=1)
    return GirsanovWeights(np.exp(lz), lz, zs, float(delta), tc.sup_psi)


def exp_moment_bound(p, delta, psi_sup):
    """``exp(p (p - 1) delta psi_sup^2 / 2)``."""
    return math.exp(0.5 * p * (p - 1) * delta * psi_sup**2)


@dataclass(frozen=True)
class MomentCheck:
    p: float
    empirical: float
    se: float
    ci: tuple
    bound: float
    slack: float
    passed: bool

    def as_dict(self):
        return {"p": self.p, "empirical": self.empirical, "se": self.se,
                "ci_low": self.ci[0], "ci_high": self.ci[1], "bound": self.bound,
                "slack": self.slack, "pass": self.passed}


def moment_bound_check(weights, p, slack=1.02, n_boot=400, n_groups=1000, level=0.95,
                       seed=0):
    """Empirical ``E[Z^p]`` against the exponential-martingale moment bound.

    The CI is a bootstrap over ``n_groups`` contiguous path groups (group
    sums are exchangeable because paths are i.i.d.), which keeps the cost
    independent of the path count. Passes iff the upper CI end is at most
    ``bound * slack``.
    """
    if not p > 1:
        raise InvalidParams("p must exceed 1")
    zp = weights.z ** p
    n = len(zp)
    g = max(2, min(int(n_groups), n))
    edges = np.linspace(0, n, g + 1).astype(np.int64)
    sums = np.add.reduceat(zp, edges[:-1])
    counts = np.diff(edges).astype(np.float64)
    gen = np.random.default_rng(seed)
    idx = gen.integers(0, g, size=(n_boot, g))
    reps = sums[idx].sum(axis=1) / counts[idx].sum(axis=1)
    lo, hi = np.quantile(reps, [0.5 - level / 2, 0.5 + level / 2])
    emp = float(zp.mean())
    bound = exp_moment_bound(p, weights.delta, weights.psi_sup)
    se = float(zp.std(ddof=1) / math.sqrt(n))
    return MomentCheck(float(p), emp, se, (float(lo), float(hi)), bound, slack,
                       bool(hi <= bound * slack))


def reweighted_expectation(values, weights, mask=None):
    """Mean and standard error of ``values * Z * 1_mask`` under P.

    ``values`` are ``f(X-bar_t)`` per path (or a callable applied to nothing
    else); ``weights`` a :class:`GirsanovWeights` or an array of ``Z``.
    """
    z = weights.z if isinstance(weights, GirsanovWeights) else np.asarray(weights, float)
    v = np.asarray(values, dtype=np.float64) * z
    if mask is not None:
        v = np.where(mask, v, 0.0)
    n = len(v)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(n))


def cross_check(tc, y, delta, m, n_paths, seed, f, n_sigma=4.0):
    """Compare ``E_Q[f(X-bar_t)]`` by direct Q simulation with the P reweighting.

    Both runs share the window noise, so the difference is the estimator gap
    of two coupled schemes. Returns a dict with both estimates, the combined
    SE and the pass flag at ``n_sigma``.
    """
    q = simulate_window(tc, y, delta, m, n_paths, seed, drift=True)
    pw = simulate_window(tc, y, delta, m, n_paths, seed, drift=False)
    fq = np.asarray(f(q.x_terminal), dtype=np.float64)
    eq, se_q = float(fq.mean()), float(fq.std(ddof=1) / math.sqrt(n_paths))
    ep, se_p = reweighted_expectation(f(pw.x_terminal), pw.weights)
    se = math.hypot(se_q, se_p)
    return {"direct": eq, "direct_se": se_q, "reweighted": ep, "reweighted_se": se_p,
            "combined_se": se, "pass": bool(abs(eq - ep) <= n_sigma * se)}


def form_gap_refinement(tc, y, delta, ms, n_paths, seed):
    """Exponential versus product form under grid refinement.

    Returns per-``m`` RMS of the relative path-wise gap and the mean log gap
    ``E[log z_sde - log z]`` with log-log slopes against ``dt``. The RMS gap
    shrinks like ``dt^(1/2)`` (one quadratic-variation term per step) and
    the mean log gap like ``dt``.
    """
    rms, mean_log, dts = [], [], []
    for m in ms:
        w = simulate_window(tc, y, delta, int(m), n_paths, seed).weights
        ok = w.z_sde > 0
        rms.append(float(np.sqrt(np.mean(w.rel_gap**2))))
        mean_log.append(float(np.mean(np.log(w.z_sde[ok]) - w.log_z[ok])))
        dts.append(delta / m)
    dts = np.array(dts)
    out = {"dt": dts.tolist(), "rms_rel_gap": rms, "mean_log_gap": mean_log,
           "rms_slope": loglog_fit(dts, np.array(rms)).slope}
    ml = np.abs(np.array(mean_log))
    if np.all(ml > 0):
        out["mean_log_slope"] = loglog_fit(dts, ml).slope
    return out


def lp_norm_bound(q, delta, psi_sup):
    """``||Z_t||_{L^q(P)} <= exp((q - 1) delta psi_sup^2 / 2)`` from the moment bound."""
    return math.exp(0.5 * (q - 1.0) * delta * psi_sup**2)


def compute_C_alpha(tc, delta, alpha, holder_const=None):
    """Upper bound for the constant in the Holder approximation estimate.

    ``max(2 / sqrt(1 + alpha) ||Z||_{2/(1-alpha)} ||sigma_bar||^alpha K,
    psi_sup^2 ||Z||_2)`` with both Z norms replaced by their moment-bound
    majorants and ``K`` the Holder constant of ``psi`` (1 unless given or
    set on the coefficient spec). Returns ``(C_alpha, branch1, branch2)``; the first
    branch grows without bound as ``alpha -> 1``.
    """
    if not 0 < alpha < 1:
        raise InvalidParams("alpha must lie in (0, 1)")
    k = tc.spec.holder_const if holder_const is None else holder_const
    ps = tc.sup_psi
    b1 = (2.0 / math.sqrt(1.0 + alpha) * lp_norm_bound(2.0 / (1.0 - alpha), delta, ps)
          * tc.sup_sigma_bar**alpha * k)
    b2 = ps**2 * lp_norm_bound(2.0, delta, ps)
    return max(b1, b2), b1, b2


def mc_z_norms(weights, alpha):
    """Monte Carlo ``(||Z||_{2/(1-alpha)}, ||Z||_2)`` for comparison with the bounds."""
    q = 2.0 / (1.0 - alpha)
    z = weights.z
    return float(np.mean(z**q) ** (1.0 / q)), float(np.sqrt(np.mean(z * z)))


@dataclass
class ApproximationTerm:
    """Per-delta estimates of the window approximation term.

    ``value[k]`` is ``E_P[int |psi(X-bar_u) Z_u - psi(X_{t-delta})|^2 du]^(1/2)``
    with SE by the delta method.
    """

    deltas: np.ndarray
    value: np.ndarray
    se: np.ndarray
    slope: float
    slope_ci: tuple
    predicted: float

    def rows(self):
        for d, v, s in zip(self.deltas, self.value, self.se):
            yield {"delta": float(d), "value": float(v), "se": float(s)}


def approximation_term(spec, tc, t, deltas, n_paths, seed, m=64, pre_dt=1e-3):
    """Estimate the approximation term over a delta ladder and fit its log-log slope.

    ``X_{t-delta}`` comes from an Euler run of X under Q on the pre-window
    stream; the pair ``(X-bar, Z)`` then runs driftless under P from it on
    the window stream, ``m`` steps per window.
    """
    deltas = np.asarray(deltas, dtype=np.float64)
    vals, ses = [], []
    for d in deltas:
        pre = t - d
        n_pre = max(1, int(math.ceil(pre / pre_dt)))
        ens = simulate_euler(spec, SimGrid(0.0, pre, n_pre), n_paths, seed,
                             stream=rng.STREAM_PRE)
        w = simulate_window(tc, ens.x_terminal, float(d), m, n_paths, seed, t=t)
        mu = float(w.i6.mean())
        se_mu = float(w.i6.std(ddof=1) / math.sqrt(n_paths))
        v = math.sqrt(mu)
        vals.append(v)
        ses.append(se_mu / (2.0 * v) if v > 0 else 0.0)
    vals, ses = np.array(vals), np.array(ses)
    fit = loglog_fit(deltas, vals, ses / vals)
    return ApproximationTerm(deltas, vals, ses, fit.slope, fit.ci, 0.5 * (1.0 + spec.alpha))
