"""Discrete Malliavin calculus on driftless Euler chains of the localized SDE.

On a grid with ``m`` increments the derivative ``D_s F`` for ``s`` in the
``k``-th cell is ``dF / d(dW_k)``, the inner product of H is
``sum_k u_k v_k dt`` and the divergence of a step process ``u`` is

    delta(u) = sum_k u_k dW_k - dt sum_k d u_k / d(dW_k),

which is the Ito sum when ``u`` is adapted. First and second variations of
``X-bar`` are propagated along the chain so that all weights are exact
functions of the simulated increments.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rng
from ._accel import run_blocks
from .errors import DegenerateCovariance, InsufficientRange, InvalidParams, UnsupportedPair
from .kernels import impl
from .mollifier import eval_phi, eval_phi_deriv, phi_pack
from .sde import SimGrid
from .stats import loglog_fit

F_KINDS = ("W", "X")
G_KINDS = {"one": 0, "phi": 1, "phi_w": 2}


@dataclass
class DerivativeTable:
    """Per-path derivatives ``D_{s_k} F`` on a window grid and ``M_F``.

    Attributes
    ----------
    grid : SimGrid
    D : ndarray, shape (n_paths, m)
    F : ndarray
    kind : str
        ``"X"`` for ``F = X-bar_t`` or ``"W"`` for the W increment.
    """

    grid: SimGrid
    D: np.ndarray
    F: np.ndarray
    kind: str

    @property
    def M(self):
        return malliavin_covariance(self)


def first_variation(paths, increments, tc, grid, kind="X"):
    """Derivative table of ``X-bar_t`` (or of ``W_t - W_{t-delta}``) along recorded paths.

    ``D_{s_k} X-bar_t = sigma_bar(X_k) prod_{j > k} (1 + sigma_bar'(X_j) dW_j)``;
    for the W increment ``D_s F = 1``.
    """
    x = np.atleast_2d(np.asarray(paths, dtype=np.float64))
    dw = np.atleast_2d(np.asarray(increments, dtype=np.float64))
    n, m = dw.shape
    if x.shape != (n, m + 1) or m != grid.n_steps:
        raise InvalidParams("paths must be (n, m + 1) and increments (n, m) on the grid")
    if not np.all(np.isfinite(x)):
        from .errors import NanDivergence
        bad = np.argwhere(~np.isfinite(x))[0]
        raise NanDivergence(int(bad[0]), int(bad[1]))
    if kind == "W":
        return DerivativeTable(grid, np.ones((n, m)), dw.sum(axis=1), "W")
    if kind != "X":
        raise InvalidParams("kind must be 'X' or 'W'")
    s, s1, _ = tc.sigma_bar(x[:, :-1].ravel(), order=1)
    s = s.reshape(n, m)
    a = 1.0 + s1.reshape(n, m) * dw
    # Phi_{k+1} = prod_{j > k} a_j, built right to left
    tail = np.ones((n, m))
    for k in range(m - 2, -1, -1):
        tail[:, k] = tail[:, k + 1] * a[:, k + 1]
    return DerivativeTable(grid, s * tail, x[:, -1], "X")


def malliavin_covariance(table):
    """``M_F = sum_k (D_k F)^2 dt`` per path; raises on non-positive values."""
    M = np.sum(table.D * table.D, axis=1) * table.grid.dt
    bad = ~(M > 0)
    if bad.any():
        raise DegenerateCovariance(f"M_F <= 0 on {int(bad.sum())} paths (first {int(np.argmax(bad))})")
    return M


def skorokhod_adapted(u, increments):
    """Divergence of an adapted step integrand: the Ito sum ``sum u_k dW_k``."""
    return np.sum(np.asarray(u) * np.asarray(increments), axis=-1)


def hermite_weight(F, delta, order):
    """Closed forms for the W increment with ``G = 1``: ``F / delta`` and ``(F^2 - delta) / delta^2``."""
    F = np.asarray(F, dtype=np.float64)
    if order == 1:
        return F / delta
    if order == 2:
        return (F * F - delta) / delta**2
    raise UnsupportedPair("only orders 1 and 2 have Hermite forms")


@dataclass
class WeightSample:
    """Per-path output of :func:`ibp_weights`."""

    F: np.ndarray
    G: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    M: np.ndarray
    sum_DX: np.ndarray
    x_terminal: np.ndarray
    w_increment: np.ndarray
    delta: float
    m: int
    pair: tuple

    def H(self, order):
        return self.H1 if order == 1 else self.H2


def _resolve(tc, F, G, order):
    if F not in F_KINDS:
        raise UnsupportedPair(f"F must be one of {F_KINDS}, got {F!r}")
    if G not in G_KINDS:
        raise UnsupportedPair(f"G must be one of {tuple(G_KINDS)}, got {G!r}")
    if order not in (1, 2):
        raise UnsupportedPair(f"order must be 1 or 2, got {order!r}")
    if F == "W":
        return False, 1.0, 0
    if tc.sigma_is_constant:
        return False, float(tc.spec.sigma(0.0)), 1
    if G == "one" and order == 1:
        return True, 1.0, 1
    raise UnsupportedPair(f"(F=X, G={G}, order={order}) needs constant sigma_bar; "
                          "general sigma_bar supports G=one at order 1 only")


def supported_pairs(tc):
    """All registered ``(F, G, order)`` combinations for these coefficients."""
    out = []
    for F in F_KINDS:
        for G in G_KINDS:
            for order in (1, 2):
                try:
                    _resolve(tc, F, G, order)
                except UnsupportedPair:
                    continue
                out.append((F, G, order))
    return out


def ibp_weights(tc, F, G, order, delta, n_paths, seed, y=None, m=64, stream=rng.STREAM_WINDOW,
                phi_eps=None, phi_a=None):
    """Simulate driftless windows and return ``F``, ``G`` and the weights ``H1`` (and ``H2``).

    Parameters
    ----------
    tc : TruncatedCoeffs
    F : {"W", "X"}
        ``W_t - W_{t-delta}`` or ``X-bar_t``.
    G : {"one", "phi", "phi_w"}
        ``1``, ``phi_eps(X-bar_t - y0)`` or ``phi_eps(X-bar_t - y0) (W_t - W_{t-delta})``.
    order : {1, 2}
    delta : float
        Window length.
    y : float or ndarray, optional
        Window start; defaults to ``y0``.
    phi_eps, phi_a : float, optional
        Bump used in G; defaults to ``tc.spec.eps`` and ``1.5 eps``.

    Raises
    ------
    UnsupportedPair
    DegenerateCovariance
    """
    general, cf, fkind = _resolve(tc, F, G, order)
    s = tc.spec
    n = int(n_paths)
    ys = np.broadcast_to(np.asarray(s.y0 if y is None else y, dtype=np.float64), (n,)).copy()
    pp = phi_pack(s.eps if phi_eps is None else phi_eps, phi_a)
    k0, k1 = rng.seed_key(seed)
    dt = delta / m
    Fv, Gv, H1, H2, M, SDX = (np.empty(n) for _ in range(6))
    kern = impl()

    def work(a, b):
        kern.malliavin_block(tc.sigma_table, tc.lam_pack, True, pp, float(s.y0), ys[a:b], dt, m,
                             k0, k1, stream, a, 0, general, cf, fkind, G_KINDS[G], order,
                             Fv[a:b], Gv[a:b], H1[a:b], H2[a:b], M[a:b], SDX[a:b])

    run_blocks(work, n)
    bad = ~(M > 0)
    if bad.any():
        raise DegenerateCovariance(f"M_F <= 0 on {int(bad.sum())} paths")
    w = np.sqrt(dt) * rng.normals(seed, n, m, stream).sum(axis=1) if F == "X" else Fv
    xT = Fv if F == "X" else None
    return WeightSample(Fv, Gv, H1, H2, M, SDX, xT, w, float(delta), int(m), (F, G, order))


def _test_fn(name, theta=1.0, coeffs=(0.0, 1.0, 1.0), eps=1.0, a=None, center=0.0):
    """``x -> (f, f', f'')`` for the test-function registry."""
    if name == "sin":
        return lambda x: (np.sin(theta * x), theta * np.cos(theta * x),
                          -theta * theta * np.sin(theta * x))
    if name == "poly":
        c = np.asarray(coeffs, dtype=np.float64)
        p = np.polynomial.Polynomial(c)
        d1, d2 = p.deriv(1), p.deriv(2)
        return lambda x: (p(x), d1(x), d2(x))
    if name == "bump":
        return lambda x: (eval_phi(eps, a, x - center), eval_phi_deriv(eps, a, x - center, 1),
                          eval_phi_deriv(eps, a, x - center, 2))
    raise InvalidParams(f"unknown test function {name!r}; use sin, poly or bump")


TEST_FUNCTIONS = ("sin", "poly", "bump")


@dataclass
class IbpReport:
    """Both sides of ``E[phi^(n)(F) G] = E[phi(F) H_n]`` with their SEs."""

    lhs: tuple
    rhs: tuple
    order: int
    h1_l2_norm: float
    delta: float
    combined_se: float
    passed: bool
    params: dict = field(default_factory=dict)

    def to_json(self, path=None):
        d = asdict(self)
        d["lhs"] = list(self.lhs)
        d["rhs"] = list(self.rhs)
        text = json.dumps(d, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def _mean_se(v):
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))


def ibp_report(ws, order, test="sin", n_sigma=4.0, seed=0, y=None, **test_kw):
    """Evaluate both sides of the identity on an existing :class:`WeightSample`.

    One simulated sample at order 2 serves both orders and every test function.
    """
    if order == 2 and not np.all(np.isfinite(ws.H2)):
        raise UnsupportedPair(f"sample for pair {ws.pair} carries no order-2 weight")
    f = _test_fn(test, **test_kw)(ws.F)
    lhs = _mean_se(f[order] * ws.G)
    rhs = _mean_se(f[0] * ws.H(order))
    se = math.hypot(lhs[1], rhs[1])
    ok = bool(np.isfinite(lhs[0]) and np.isfinite(rhs[0]) and abs(lhs[0] - rhs[0]) <= n_sigma * se)
    params = {"F": ws.pair[0], "G": ws.pair[1], "order": int(order), "n_paths": int(len(ws.F)),
              "seed": int(seed), "test": test, "delta": ws.delta, "m": ws.m,
              "y": None if y is None else float(y), "n_sigma": n_sigma,
              **{k: (list(v) if isinstance(v, tuple) else v) for k, v in test_kw.items()}}
    return IbpReport(lhs, rhs, int(order), float(np.sqrt(np.mean(ws.H1**2))), ws.delta, se,
                     ok, params)


def verify_ibp(tc, F, G, order, n_paths, seed, test="sin", delta=0.1, m=64, y=None,
               n_sigma=4.0, **test_kw):
    """Monte Carlo check of the integration-by-parts identity for one registry entry.

    Failures are reported through ``passed``, never raised.
    """
    ws = ibp_weights(tc, F, G, order, delta, n_paths, seed, y=y, m=m)
    yy = tc.spec.y0 if y is None else y
    return ibp_report(ws, order, test, n_sigma, seed, yy, **test_kw)


@dataclass
class ScalingReport:
    """Fit of ``log ||H_n2||_L2`` against ``log delta``."""

    deltas: np.ndarray
    norms: np.ndarray
    norm_se: np.ndarray
    slope: float
    slope_ci: tuple
    predicted: float
    pair: tuple

    def rows(self):
        for d, v, s in zip(self.deltas, self.norms, self.norm_se):
            yield {"delta": float(d), "l2_norm": float(v), "se": float(s)}


def weight_norm_scaling(tc, deltas, n2, n_paths, seed, F="W", G="one", m=64, y=None):
    """Slope of ``||H_n2||_L2`` against delta; the prediction is ``-n2 / 2``.

    Raises
    ------
    InsufficientRange
        Fewer than 4 deltas or less than 1.5 decades covered.
    """
    deltas = np.asarray(sorted(deltas), dtype=np.float64)
    if len(deltas) < 4 or math.log10(deltas[-1] / deltas[0]) < 1.5 - 1e-12:
        raise InsufficientRange("need at least 4 deltas spanning 1.5 decades")
    norms, ses = [], []
    for d in deltas:
        h = ibp_weights(tc, F, G, n2, float(d), n_paths, seed, y=y, m=m).H(n2)
        h2 = h * h
        mu = float(h2.mean())
        v = math.sqrt(mu)
        norms.append(v)
        ses.append(float(h2.std(ddof=1) / math.sqrt(len(h2))) / (2.0 * v))
    norms, ses = np.array(norms), np.array(ses)
    fit = loglog_fit(deltas, norms, ses / norms)
    return ScalingReport(deltas, norms, ses, fit.slope, fit.ci, -0.5 * n2, (F, G, n2))
