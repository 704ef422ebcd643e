"""Euler-Maruyama simulation of the original and the localized SDE.

``X`` solves ``dX = b(X) dt + sigma(X) dB`` from ``x0``. ``X-bar(v, y)``
solves the same equation with the truncated coefficients from ``(v, y)``
and consumes the same increments, so the two agree exactly while ``X``
stays in ``B_{4 eps}(y0)``.

Event simulations cover ``[0, t - delta]`` with coarse steps on the
pre-window stream and the window ``[t - delta, t]`` with ``n_d`` fine
steps on the main stream; stopping times, the sup-increment and the
A / C labels are evaluated on the fine window grid.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy.stats import binomtest

from . import rng
from ._accel import run_blocks
from .coeffs import build_truncated, lambda_pack
from .errors import (DecompositionViolation, InsufficientHits, InvalidParams,
                     NanDivergence)
from .kernels import _np_core, impl
from .mollifier import phi_pack
from .stats import loglog_fit

LABEL_NEITHER, LABEL_A, LABEL_C = 0, 1, 2
LABEL_NAMES = {LABEL_NEITHER: "neither", LABEL_A: "A", LABEL_C: "C"}


@dataclass(frozen=True)
class SimGrid:
    """Uniform grid on ``[t_start, t_end]`` with ``n_steps`` steps."""

    t_start: float
    t_end: float
    n_steps: int

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise InvalidParams(f"n_steps must be a positive integer, got {self.n_steps}")
        if not self.t_end > self.t_start:
            raise InvalidParams("t_end must exceed t_start")

    @property
    def dt(self):
        return (self.t_end - self.t_start) / self.n_steps

    def times(self):
        return self.t_start + self.dt * np.arange(self.n_steps + 1)


@dataclass
class PathEnsemble:
    """Simulated paths and their per-path bookkeeping.

    Attributes
    ----------
    n_paths : int
    grid : SimGrid
        Grid of the recorded states (the window grid for event runs).
    seed : int
    x_terminal : ndarray
    states_X, states_Xbar : ndarray or None
        Recorded states, shape ``(n_paths, n_steps + 1)``. ``states_Xbar``
        starts at nu (row padded with NaN when nu is infinite).
    increments : ndarray or None
        Brownian increments on ``grid`` (recorded runs only).
    nu, tau : ndarray or None
        Grid-aligned times, ``inf`` when the event does not occur.
    labels : ndarray or None
        ``int8`` codes, see ``LABEL_NAMES``.
    stream_ids : ndarray
        Path counter words used for the noise of each path.
    """

    n_paths: int
    grid: SimGrid
    seed: int
    x_terminal: np.ndarray
    states_X: np.ndarray | None = None
    states_Xbar: np.ndarray | None = None
    increments: np.ndarray | None = None
    nu: np.ndarray | None = None
    tau: np.ndarray | None = None
    labels: np.ndarray | None = None
    stream_ids: np.ndarray = field(default=None)
    x_window_start: np.ndarray | None = None
    supinc: np.ndarray | None = None
    phi_positive: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.stream_ids is None:
            self.stream_ids = np.arange(self.n_paths, dtype=np.uint64)


def _raise_nan(bad, offset=0):
    idx = np.nonzero(bad >= 0)[0]
    if len(idx):
        raise NanDivergence(int(idx[0]) + offset, int(bad[idx[0]]))


def _spec_tables(spec):
    return spec.sigma.table, spec.b.table, lambda_pack(spec.y0, spec.eps)


def simulate_euler(spec, grid, n_paths, seed, record=False, substeps=1, truncated=False,
                   x0=None, stream=rng.STREAM_MAIN):
    """Euler-Maruyama paths of ``X`` (or of ``X-bar`` when ``truncated``).

    Parameters
    ----------
    spec : CoefficientSpec
    grid : SimGrid
    n_paths, seed : int
    record : bool
        Keep full paths and increments.
    substeps : int
        Each step sums ``substeps`` fine increments of the same stream, so a
        run with ``n_steps`` and ``substeps=2`` is coupled to a run with
        ``2 n_steps`` and ``substeps=1``.
    truncated : bool
        Use ``sigma_bar, b_bar`` instead of ``sigma, b``.
    x0 : float or ndarray, optional
        Start value(s); defaults to ``spec.x0``.

    Returns
    -------
    PathEnsemble
    """
    if n_paths < 1:
        raise InvalidParams("n_paths must be >= 1")
    sig, b, lp = _spec_tables(spec)
    k0, k1 = rng.seed_key(seed)
    start = np.broadcast_to(np.asarray(spec.x0 if x0 is None else x0, dtype=np.float64),
                            (n_paths,)).copy()
    xT = np.empty(n_paths)
    bad = np.empty(n_paths, dtype=np.int64)
    X = np.empty((n_paths, grid.n_steps + 1)) if record else np.empty((0, 0))
    k = impl()

    def work(s, e):
        Xv = X[s:e] if record else X
        k.euler_block(sig, b, lp, truncated, start[s:e], grid.dt, grid.n_steps, substeps,
                      k0, k1, stream, s, 0, Xv, xT[s:e], bad[s:e])

    run_blocks(work, n_paths)
    _raise_nan(bad)
    inc = None
    if record:
        z = rng.normals(seed, n_paths, grid.n_steps * substeps, stream)
        inc = np.sqrt(grid.dt / substeps) * z.reshape(n_paths, grid.n_steps, substeps).sum(axis=2)
    return PathEnsemble(n_paths, grid, int(seed), xT, states_X=X if record else None,
                        increments=inc)


def simulate_localized(tc, v, y, grid, increments, driftless=False):
    """Euler path of ``X-bar(v, y)`` on ``grid`` driven by the given increments.

    ``increments`` may be 1-D (one path) or 2-D ``(n_paths, n_steps)``.
    Returns states including the start, same leading shape as ``increments``.
    """
    inc = np.asarray(increments, dtype=np.float64)
    if inc.shape[-1] != grid.n_steps:
        raise InvalidParams("increments length must match grid.n_steps")
    if abs(grid.t_start - v) > 1e-12 * max(1.0, abs(v)):
        raise InvalidParams("grid must start at v")
    one = inc.ndim == 1
    inc = inc[None, :] if one else inc
    x = np.broadcast_to(np.asarray(y, dtype=np.float64), (inc.shape[0],)).copy()
    out = np.empty((inc.shape[0], grid.n_steps + 1))
    out[:, 0] = x
    st, bt = tc.sigma_table, tc.b_table
    for k in range(grid.n_steps):
        sv = _np_core.coef(st, tc.lam_pack, True, x, 0)[0]
        if driftless:
            x = x + sv * inc[:, k]
        else:
            bv = _np_core.coef(bt, tc.lam_pack, True, x, 0)[0]
            x = x + bv * grid.dt + sv * inc[:, k]
        out[:, k + 1] = x
        if not np.all(np.isfinite(x)):
            raise NanDivergence(int(np.argmax(~np.isfinite(x))), k + 1)
    return out[0] if one else out


def _window_start_index(grid, t, delta):
    if not 0 < delta < min(t, 1.0):
        raise InvalidParams(f"need 0 < delta < min(t, 1), got delta={delta}, t={t}")
    pos = (t - delta - grid.t_start) / grid.dt
    k0 = int(math.ceil(pos - 1e-9))
    kt = int(round((t - grid.t_start) / grid.dt))
    if k0 < 0 or kt > grid.n_steps or abs(grid.t_start + kt * grid.dt - t) > 1e-9 * max(1.0, t):
        raise InvalidParams("grid must cover [t - delta, t] with t on a node")
    return k0, kt


def stopping_times(path, grid, t, delta, spec):
    """Grid versions of nu and tau for one recorded path.

    Returns
    -------
    (nu, tau) : tuple of float
        ``nu`` is the first grid time ``>= t - delta`` with ``X`` in the closed
        ``3 eps`` ball around ``y0``; ``tau`` the first grid time ``>= nu`` with
        ``X`` outside the closed ``4 eps`` ball, searched up to ``t``. Either is
        ``inf`` when the event does not happen.
    """
    path = np.asarray(path, dtype=np.float64)
    k0, kt = _window_start_index(grid, t, delta)
    times = grid.times()
    seg = np.abs(path[k0:kt + 1] - spec.y0)
    hit = np.nonzero(seg <= 3.0 * spec.eps)[0]
    if len(hit) == 0:
        return math.inf, math.inf
    j = int(hit[0])
    out = np.nonzero(seg[j:] > 4.0 * spec.eps)[0]
    tau = math.inf if len(out) == 0 else float(times[k0 + j + int(out[0])])
    return float(times[k0 + j]), tau


@dataclass(frozen=True)
class EventClassification:
    """Label counts for one (t, delta) event run."""

    labels: np.ndarray
    n_A: int
    n_C: int
    n_neither: int
    n_localized: int
    n_exceptions: int
    exception_fraction: float
    overlap: int


def classify_events(ensemble, t, delta, spec, max_exception_fraction=1e-3):
    """Label paths A, C or neither from recorded stopping data.

    A: ``phi_eps(X_t - y0) > 0``, ``nu = t - delta`` and ``t < tau``.
    C: ``phi_eps(X_t - y0) > 0``, sup-increment of X-bar from nu ``>= eps``,
    and not A. Localized paths that are neither are grid-resolution
    exceptions; more than ``max_exception_fraction`` of the localized paths
    raises :class:`DecompositionViolation`.
    """
    e = ensemble
    if e.nu is None or e.supinc is None or e.phi_positive is None:
        raise InvalidParams("ensemble lacks stopping-time data; use simulate_events")
    w0 = e.grid.t_start
    tol = 1e-9 * max(1.0, t)
    if abs(w0 - (t - delta)) > tol or abs(e.grid.t_end - t) > tol:
        raise InvalidParams("ensemble window does not match (t - delta, t)")
    pos = np.asarray(e.phi_positive, dtype=bool)
    nu_at_start = np.abs(e.nu - w0) <= tol
    is_a = pos & nu_at_start & np.isinf(e.tau)
    cand_c = pos & np.isfinite(e.nu) & (e.supinc >= spec.eps)
    overlap = int(np.sum(is_a & cand_c))
    is_c = cand_c & ~is_a
    lab = np.zeros(e.n_paths, dtype=np.int8)
    lab[is_a] = LABEL_A
    lab[is_c] = LABEL_C
    n_loc = int(pos.sum())
    n_exc = int(np.sum(pos & ~is_a & ~is_c))
    frac = n_exc / n_loc if n_loc else 0.0
    res = EventClassification(lab, int(is_a.sum()), int(is_c.sum()),
                              int(e.n_paths - is_a.sum() - is_c.sum()), n_loc, n_exc, frac,
                              overlap)
    if frac > max_exception_fraction:
        raise DecompositionViolation(
            f"{n_exc} of {n_loc} localized paths are neither A nor C "
            f"({frac:.3%} > {max_exception_fraction:.3%})")
    return res


def event_grid(t, delta, n_window=64, pre_dt=1e-3):
    """Step counts ``(n_pre, dt_pre, n_d, dt)`` for an event run."""
    if not 0 < delta < min(t, 1.0):
        raise InvalidParams(f"need 0 < delta < min(t, 1), got delta={delta}, t={t}")
    pre = t - delta
    n_pre = max(1, int(math.ceil(pre / (pre_dt * min(t, 1.0)))))
    return n_pre, pre / n_pre, int(n_window), delta / n_window


def simulate_events(spec, t, delta, n_paths, seed, n_window=64, pre_dt=1e-3, record=False,
                    a=None):
    """Simulate X to ``t`` and the coupled X-bar restarted at nu on the window grid.

    Returns a :class:`PathEnsemble` whose grid is the window ``[t - delta, t]``
    with ``nu``, ``tau``, ``supinc``, ``phi_positive`` and kernel-side labels.
    """
    n_pre, dt_pre, n_d, dt = event_grid(t, delta, n_window, pre_dt)
    sig, b, lp = _spec_tables(spec)
    pp = phi_pack(spec.eps, a)
    k0, k1 = rng.seed_key(seed)
    n = int(n_paths)
    xs = np.empty(n)
    xT = np.empty(n)
    nu = np.empty(n, dtype=np.int64)
    tau = np.empty(n, dtype=np.int64)
    sup = np.empty(n)
    pos = np.empty(n, dtype=np.bool_)
    lab = np.empty(n, dtype=np.int8)
    bad = np.empty(n, dtype=np.int64)
    Xr = np.empty((n, n_d + 1)) if record else np.empty((0, 0))
    Xb = np.empty((n, n_d + 1)) if record else np.empty((0, 0))
    k = impl()

    def work(s, e):
        k.event_block(sig, b, lp, pp, spec.y0, spec.eps, spec.x0, dt_pre, n_pre, dt, n_d,
                      k0, k1, s, Xr[s:e] if record else Xr, Xb[s:e] if record else Xb,
                      xs[s:e], xT[s:e], nu[s:e], tau[s:e], sup[s:e], pos[s:e], lab[s:e],
                      bad[s:e])

    run_blocks(work, n)
    _raise_nan(bad)
    grid = SimGrid(t - delta, t, n_d)
    times = grid.times()
    nu_t = np.where(nu >= 0, times[np.maximum(nu, 0)], np.inf)
    tau_t = np.where(tau >= 0, times[np.maximum(tau, 0)], np.inf)
    inc = None
    if record:
        inc = np.sqrt(dt) * rng.normals(seed, n, 2 * n_d, rng.STREAM_MAIN)
    return PathEnsemble(n, grid, int(seed), xT, states_X=Xr if record else None,
                        states_Xbar=Xb if record else None, increments=inc, nu=nu_t,
                        tau=tau_t, labels=lab, x_window_start=xs, supinc=sup,
                        phi_positive=pos,
                        meta={"n_pre": n_pre, "dt_pre": dt_pre, "t": t, "delta": delta,
                              "sup_is_grid_max": True})


def subgaussian_oracle(tc, delta):
    """``4 exp(-(eps - |b_bar| delta)_+^2 / (4 |sigma_bar|^2 delta))``.

    Reflection-principle bound on ``Q(sup_{s <= delta} |X-bar_s - X-bar_0| >= eps)``
    with the slack factor 2 in the exponent; reduces to
    ``4 exp(-eps^2 / (4 sigma^2 delta))`` for zero drift.
    """
    eps = tc.spec.eps
    margin = max(eps - tc.sup_b_bar * delta, 0.0)
    if tc.sup_sigma_bar == 0.0:
        return 0.0 if margin > 0 else 1.0
    return min(1.0, 4.0 * math.exp(-margin**2 / (4.0 * tc.sup_sigma_bar**2 * delta)))


@dataclass
class EventRateReport:
    """Per-delta sup-increment event probabilities."""

    deltas: np.ndarray
    counts: np.ndarray
    n_paths: int
    prob: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    oracle: np.ndarray
    bound_shape: np.ndarray
    slope: float | None
    slope_ci: tuple | None
    classifications: list
    note: str = ""

    def rows(self):
        for i, d in enumerate(self.deltas):
            c = self.classifications[i]
            yield {"delta": float(d), "count": int(self.counts[i]), "n_paths": self.n_paths,
                   "prob": float(self.prob[i]), "ci_low": float(self.ci_low[i]),
                   "ci_high": float(self.ci_high[i]), "oracle": float(self.oracle[i]),
                   "bound_shape": float(self.bound_shape[i]), "n_A": c.n_A, "n_C": c.n_C,
                   "n_localized": c.n_localized, "n_exceptions": c.n_exceptions}


def estimate_event_rate(spec, t, deltas, n_paths, seed, n_window=64, pre_dt=1e-3,
                        max_exception_fraction=1e-3, a=None):
    """Estimate ``Q(sup_{s <= delta} |X-bar_{nu+s} - X_nu| >= eps)`` over a delta ladder.

    The sup is a max over window grid nodes, so estimates are lower bounds of
    the continuous-time probability. Also reports the bound shape
    ``delta + delta^2`` and the sub-Gaussian oracle, and fits a log-log slope
    through the nonzero counts.

    Raises
    ------
    InsufficientHits
        When every count is zero; the exception carries the report.
    """
    deltas = np.asarray(sorted(deltas, reverse=True), dtype=np.float64)
    if len(deltas) < 3:
        raise InvalidParams("need at least 3 delta values")
    tc = build_truncated(spec, validate=False)
    counts, lo, hi, cls = [], [], [], []
    for d in deltas:
        ens = simulate_events(spec, t, float(d), n_paths, seed, n_window, pre_dt, a=a)
        cls.append(classify_events(ens, t, float(d), spec, max_exception_fraction))
        hit = int(np.sum(np.isfinite(ens.nu) & (ens.supinc >= spec.eps)))
        counts.append(hit)
        ci = binomtest(hit, n_paths).proportion_ci(0.95, method="wilson")
        lo.append(ci.low)
        hi.append(ci.high)
    counts = np.array(counts)
    prob = counts / n_paths
    oracle = np.array([subgaussian_oracle(tc, d) for d in deltas])
    rep = EventRateReport(deltas, counts, n_paths, prob, np.array(lo), np.array(hi), oracle,
                          deltas + deltas**2, None, None, cls)
    nz = counts > 0
    if not nz.any():
        rep.note = "all counts zero; oracle bound reported instead of a slope"
        err = InsufficientHits(rep.note)
        err.report = rep
        raise err
    if nz.sum() >= 2:
        fit = loglog_fit(deltas[nz], prob[nz])
        rep.slope, rep.slope_ci = fit.slope, fit.ci
    return rep


def sup_increment_moment(tc, y, deltas, n_paths, seed, n_window=64):
    """``E[sup_{s <= delta} |X-bar_s - y|^2]`` under Q for each delta, with SEs."""
    out = []
    for d in deltas:
        grid = SimGrid(0.0, float(d), n_window)
        inc = rng.brownian_increments(seed, n_paths, n_window, grid.dt, rng.STREAM_WINDOW)
        paths = simulate_localized(tc, 0.0, y, grid, inc, driftless=False)
        s2 = np.max(np.abs(paths - y), axis=1) ** 2
        out.append((float(s2.mean()), float(s2.std(ddof=1) / math.sqrt(n_paths))))
    return out


def with_labels(ensemble, classification):
    """Copy of ``ensemble`` carrying the labels of ``classification``."""
    return replace(ensemble, labels=classification.labels)


MAGIC = b"HLENS1\0\0"
_COLUMNS = ("x_terminal", "states_X", "states_Xbar", "increments", "nu", "tau", "labels",
            "stream_ids", "x_window_start", "supinc", "phi_positive")


def spec_digest(spec):
    """SHA-256 of a canonical JSON rendering of a :class:`CoefficientSpec`."""
    d = {}
    for f in fields(spec):
        v = getattr(spec, f.name)
        d[f.name] = v.to_list() if hasattr(v, "to_list") else v
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def save_ensemble(ensemble, path, spec=None):
    """Write an ensemble as a little-endian columnar file.

    Layout: 8-byte magic, ``uint64`` header length, a JSON header (seed,
    grid, spec digest, column table, meta), then each column's raw bytes
    padded to 8-byte alignment.
    """
    e = ensemble
    cols, blobs, off = [], [], 0
    for name in _COLUMNS:
        a = getattr(e, name)
        if a is None:
            continue
        a = np.ascontiguousarray(a)
        a = a.astype(a.dtype.newbyteorder("<"), copy=False)
        raw = a.tobytes()
        pad = (-len(raw)) % 8
        cols.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape),
                     "offset": off, "nbytes": len(raw)})
        blobs.append(raw + b"\0" * pad)
        off += len(raw) + pad
    header = {"n_paths": e.n_paths, "seed": e.seed,
              "grid": [e.grid.t_start, e.grid.t_end, e.grid.n_steps],
              "spec_digest": None if spec is None else spec_digest(spec),
              "columns": cols, "meta": e.meta}
    hb = json.dumps(header, sort_keys=True).encode()
    hb += b" " * ((-len(hb)) % 8)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(hb)))
        fh.write(hb)
        for b in blobs:
            fh.write(b)


def load_ensemble(path, spec=None):
    """Read a file written by :func:`save_ensemble`.

    With ``spec`` given, the stored spec digest must match it.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise InvalidParams(f"{path} is not an ensemble file")
    (hl,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16:16 + hl])
    if spec is not None and header["spec_digest"] != spec_digest(spec):
        raise InvalidParams("ensemble was simulated for a different CoefficientSpec")
    base = 16 + hl
    kw = {}
    for c in header["columns"]:
        start = base + c["offset"]
        a = np.frombuffer(data[start:start + c["nbytes"]], dtype=np.dtype(c["dtype"]))
        kw[c["name"]] = a.reshape(c["shape"]).astype(a.dtype.newbyteorder("="))
    g = header["grid"]
    return PathEnsemble(header["n_paths"], SimGrid(g[0], g[1], int(g[2])), header["seed"],
                        meta=header["meta"], **kw)
