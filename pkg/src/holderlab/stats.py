"""Small statistical helpers shared by the estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as _st


@dataclass(frozen=True)
class LineFit:
    """Weighted least-squares line ``y = intercept + slope * x``."""

    slope: float
    intercept: float
    slope_se: float
    ci: tuple
    n: int


def line_fit(x, y, sigma=None, level=0.95):
    """Weighted straight-line fit with a Student-t slope interval.

    ``sigma`` are per-point standard errors of ``y``; ``None`` means equal weights.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(x)
    if n < 2:
        raise ValueError("need at least two points")
    w = np.ones(n) if sigma is None else 1.0 / np.maximum(np.asarray(sigma, float), 1e-300) ** 2
    sw = w.sum()
    xm = np.sum(w * x) / sw
    ym = np.sum(w * y) / sw
    sxx = np.sum(w * (x - xm) ** 2)
    slope = float(np.sum(w * (x - xm) * (y - ym)) / sxx)
    icpt = float(ym - slope * xm)
    if n > 2:
        res = y - icpt - slope * x
        s2 = np.sum(w * res**2) / (n - 2)
        se = math.sqrt(s2 / sxx)
        if sigma is not None:
            # do not let a lucky fit shrink below the propagated errors
            se = max(se, math.sqrt(1.0 / sxx))
        q = _st.t.ppf(0.5 + level / 2, n - 2)
    else:
        se = math.sqrt(1.0 / sxx) if sigma is not None else math.inf
        q = _st.norm.ppf(0.5 + level / 2)
    return LineFit(slope, icpt, float(se), (slope - q * se, slope + q * se), n)


def loglog_fit(x, y, rel_se=None, level=0.95):
    """Line fit of ``log y`` against ``log x``; ``rel_se`` are relative errors of ``y``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    return line_fit(np.log(x), np.log(y), rel_se, level)


def bootstrap_ci(values, stat, n_boot=1000, level=0.95, seed=0):
    """Percentile bootstrap interval of ``stat`` over resamples of ``values`` rows."""
    values = np.asarray(values)
    gen = np.random.default_rng(seed)
    n = len(values)
    reps = np.empty(n_boot)
    for i in range(n_boot):
        reps[i] = stat(values[gen.integers(0, n, n)])
    lo, hi = np.quantile(reps, [0.5 - level / 2, 0.5 + level / 2])
    return float(lo), float(hi)


def wilson_ci(k, n, level=0.95):
    ci = _st.binomtest(int(k), int(n)).proportion_ci(level, method="wilson")
    return float(ci.low), float(ci.high)
