"""Local density by Levy inversion of the localized characteristic function.

The tabulated cf is resampled to a uniform grid on ``[0, cutoff]`` and the
inversion integral is a trapezoid sum. Negative frequencies enter through
``phi(-theta) = conj(phi(theta))``, so

    f(x) = (1 / pi) int_0^cutoff Re(exp(-i theta x) phi(theta)) dtheta.

Every profile carries an error budget: quadrature (4096 versus 2048
nodes), Monte Carlo (``(1/pi) int SE``) and the modelled tail beyond the
cutoff.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator

from .coeffs import holder_quotient
from .errors import InvalidParams, TailDivergence
from .stats import line_fit

N_NODES = 4096


@dataclass
class DensityProfile:
    """Density values on a grid with their error budget.

    Attributes
    ----------
    xs, values : ndarray
    theta_cutoff : float
    quadrature_error_bound : float
        ``max |I_4096 - I_2048|`` over the grid.
    mc_error_bound : float
        ``(1/pi) int_0^cutoff SE(theta) dtheta``.
    tail_error_bound : float
        Modelled tail mass beyond the cutoff; ``nan`` when no model is given.
    imag_residue : float
    holder : tuple or None
        ``(alpha, modulus)`` once computed.
    """

    xs: np.ndarray
    values: np.ndarray
    theta_cutoff: float
    quadrature_error_bound: float
    mc_error_bound: float = 0.0
    tail_error_bound: float = float("nan")
    imag_residue: float = 0.0
    holder: tuple | None = None
    nodes: np.ndarray | None = field(default=None, repr=False)
    cf_nodes: np.ndarray | None = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    @property
    def error_budget(self):
        """Quadrature + MC + tail (tail counted as 0 when unmodelled)."""
        tail = 0.0 if math.isnan(self.tail_error_bound) else self.tail_error_bound
        return self.quadrature_error_bound + self.mc_error_bound + tail

    def scaled(self, k):
        return DensityProfile(self.xs, self.values * k, self.theta_cutoff,
                              self.quadrature_error_bound * abs(k), self.mc_error_bound * abs(k),
                              self.tail_error_bound * abs(k), self.imag_residue * abs(k), None,
                              self.nodes, None if self.cf_nodes is None else self.cf_nodes * k,
                              dict(self.meta))

    def integral(self):
        return float(np.trapezoid(self.values, self.xs))

    def sidecar(self):
        tail = None if math.isnan(self.tail_error_bound) else self.tail_error_bound
        d = {"theta_cutoff": self.theta_cutoff,
             "quadrature_error_bound": self.quadrature_error_bound,
             "mc_error_bound": self.mc_error_bound, "tail_error_bound": tail,
             "tail_model": self.meta.get("tail_model", "none"),
             "imag_residue": self.imag_residue, "error_budget": self.error_budget,
             "n_points": int(len(self.xs))}
        if self.holder is not None:
            d["holder"] = {"alpha": self.holder[0], "modulus": self.holder[1]}
        return d

    def to_csv(self, path, sidecar=True):
        with open(path, "w") as fh:
            fh.write("x,value\n")
            for x, v in zip(self.xs, self.values):
                fh.write(f"{float(x)!r},{float(v)!r}\n")
        if sidecar:
            side = str(path)[:-4] + ".json" if str(path).endswith(".csv") else str(path) + ".json"
            with open(side, "w") as fh:
                json.dump(self.sidecar(), fh, indent=2, sort_keys=True)
                fh.write("\n")

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        side = str(path)[:-4] + ".json"
        try:
            with open(side) as fh:
                meta = json.load(fh)
        except FileNotFoundError:
            meta = {}
        tail = meta.get("tail_error_bound")
        return cls(data[:, 0], data[:, 1], meta.get("theta_cutoff", float("nan")),
                   meta.get("quadrature_error_bound", float("nan")),
                   meta.get("mc_error_bound", 0.0), float("nan") if tail is None else tail,
                   meta.get("imag_residue", 0.0))


def _interp(kind, th, y):
    if kind == "pchip":
        return PchipInterpolator(th, y)
    if kind == "cubic":
        return CubicSpline(th, y, bc_type="not-a-knot")
    raise InvalidParams(f"interp must be 'pchip' or 'cubic', got {kind!r}")


def _resample(table, cutoff, n_nodes, interp):
    th = table.thetas
    est = table.estimates
    se = table.std_errors
    if th[0] > 0:
        if table.m0 is None:
            raise InvalidParams("table lacks theta = 0 and m0")
        th = np.concatenate([[0.0], th])
        est = np.concatenate([[table.m0], est])
        se = np.concatenate([[se[0]], se])
    if th[-1] < cutoff * (1 - 1e-12):
        raise InvalidParams(f"table stops at theta = {th[-1]}, below the cutoff {cutoff}")
    nodes = np.linspace(0.0, cutoff, n_nodes + 1)
    re = _interp(interp, th, est.real)(nodes)
    im = _interp(interp, th, est.imag)(nodes)
    # SEs are only budgeted, a monotone interpolant keeps them nonnegative
    s = PchipInterpolator(th, se)(nodes)
    return nodes, re + 1j * im, np.maximum(s, 0.0)


def _trap_weights(n, h):
    w = np.full(n + 1, h)
    w[0] = w[-1] = 0.5 * h
    return w


def _invert_on(nodes, cf, xs, stride=1):
    nd = nodes[::stride]
    c = cf[::stride]
    w = _trap_weights(len(nd) - 1, nd[1] - nd[0])
    out = np.empty(len(xs))
    # chunk over x to bound the (x, theta) work array
    for s in range(0, len(xs), 256):
        arg = np.outer(xs[s:s + 256], nd)
        out[s:s + 256] = (np.cos(arg) * c.real + np.sin(arg) * c.imag) @ w
    return out / math.pi


def _imag_residue(nodes, cf, xs):
    # two-sided sum with conj(phi) on the mirrored nodes; the mirrored pair cancels
    nd = nodes[1:]
    c = cf[1:]
    w = _trap_weights(len(nodes) - 1, nodes[1] - nodes[0])[1:]
    arg = np.outer(xs, nd)
    pos = -np.sin(arg) * c.real + np.cos(arg) * c.imag
    neg = np.sin(arg) * c.real - np.cos(arg) * c.imag
    res = (pos + neg) @ w + cf[0].imag * (nodes[1] - nodes[0])
    return float(np.max(np.abs(res)) / (2 * math.pi)) if len(xs) else 0.0


def levy_invert(table, xs, theta_cutoff, tail=None, n_nodes=N_NODES, interp="pchip"):
    """Invert a cf table to a density on ``xs``.

    Parameters
    ----------
    table : CharFnTable
        Must cover ``[0, theta_cutoff]`` (``theta = 0`` may come from ``m0``).
    xs : array_like
        Evaluation grid.
    theta_cutoff : float
    tail : None or tuple
        ``("power", C, gamma)`` adds the tail bound ``(1/pi) C cutoff^-gamma / gamma``.
    n_nodes : int
        Uniform quadrature nodes (even).
    interp : {"pchip", "cubic"}
        Resampling of the real and imaginary parts. ``"cubic"`` is linear in
        the table values, ``"pchip"`` is monotone.

    Returns
    -------
    DensityProfile

    Raises
    ------
    TailDivergence
        Power-law tail with ``gamma <= 0``.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if not theta_cutoff > 0:
        raise InvalidParams("theta_cutoff must be positive")
    if n_nodes % 2:
        raise InvalidParams("n_nodes must be even")
    tail_err = float("nan")
    model = "none"
    if tail is not None:
        kind, C, gamma = tail
        if kind != "power":
            raise InvalidParams(f"unknown tail model {kind!r}")
        if not gamma > 0:
            raise TailDivergence(f"tail exponent gamma = {gamma} <= 0 does not integrate")
        tail_err = C * theta_cutoff ** (-gamma) / (gamma * math.pi)
        model = f"power(C={C!r}, gamma={gamma!r})"
    nodes, cf, se = _resample(table, theta_cutoff, n_nodes, interp)
    fine = _invert_on(nodes, cf, xs)
    coarse = _invert_on(nodes, cf, xs, stride=2)
    quad = float(np.max(np.abs(fine - coarse))) if len(xs) else 0.0
    mc = float(np.trapezoid(se, nodes) / math.pi)
    prof = DensityProfile(xs, fine, float(theta_cutoff), quad, mc, tail_err,
                          _imag_residue(nodes, cf, xs), None, nodes, cf,
                          {"tail_model": model, "interp": interp})
    return prof


def local_density(m0, profile_of_L, eps, y0):
    """``p_y0 = m0 * p_tilde``; the zero profile when ``m0 = 0``."""
    if m0 < 0:
        raise InvalidParams("m0 must be >= 0")
    if m0 == 0:
        z = profile_of_L.scaled(0.0)
        z.values = np.zeros_like(profile_of_L.values)
        return z
    out = profile_of_L.scaled(m0)
    out.meta.update({"m0": float(m0), "eps": float(eps), "y0": float(y0)})
    return out


def invert_localized(table, xs, theta_cutoff, tail=None, n_nodes=N_NODES, interp="pchip"):
    """Normalize by ``m0``, invert and rescale; the two-step route to ``p_y0``."""
    y0, eps = table.localization[0], table.localization[1]
    m0 = table.m0 if table.m0 is not None else float(table.estimates[0].real)
    if m0 <= 0:
        prof = levy_invert(table, xs, theta_cutoff, tail, n_nodes, interp)
        return local_density(0.0, prof, eps, y0)
    norm = table.scaled(1.0 / m0)
    prof = levy_invert(norm, xs, theta_cutoff, tail, n_nodes, interp)
    return local_density(m0, prof, eps, y0)


@dataclass(frozen=True)
class HolderReport:
    empirical_modulus: float
    integral_bound: float
    alpha: float
    diverges: bool
    within_bound: bool

    def as_dict(self):
        return dict(self.__dict__)


def holder_modulus(profile, alpha, tail=None):
    """Empirical Holder modulus of a profile against the Fourier integral bound.

    ``integral_bound = (2^(1-alpha) / (2 pi)) int |theta|^alpha |phi| dtheta``
    over ``[-cutoff, cutoff]`` plus, under a power-law tail model, the tail
    ``int_cutoff^inf``. ``diverges`` is set when the tail model has
    ``gamma <= alpha`` or, without a model, when ``theta^alpha |phi|``
    decays no faster than ``1 / theta`` near the cutoff.
    """
    if not 0 < alpha < 1:
        raise InvalidParams("alpha must lie in (0, 1)")
    if len(profile.xs) < 64:
        raise InvalidParams("need a profile grid of at least 64 points")
    q = holder_quotient(profile.xs, profile.values, alpha)[0]
    k = 2.0 ** (1.0 - alpha)
    bound = math.nan
    diverges = False
    if profile.nodes is not None:
        nd, cf = profile.nodes, profile.cf_nodes
        integrand = nd**alpha * np.abs(cf)
        bound = float(k / math.pi * np.trapezoid(integrand, nd))
        if tail is not None:
            _, C, gamma = tail
            if gamma <= alpha:
                diverges = True
                bound = math.inf
            else:
                bound += k / math.pi * C * profile.theta_cutoff ** (alpha - gamma) / (gamma - alpha)
        else:
            top = nd >= 0.5 * profile.theta_cutoff
            ok = top & (integrand > 0)
            if ok.sum() >= 8:
                slope = line_fit(np.log(nd[ok]), np.log(integrand[ok])).slope
                diverges = slope >= -1.0
    within = bool(q <= bound + profile.error_budget) if not math.isnan(bound) else False
    return HolderReport(float(q), bound, float(alpha), bool(diverges), within)


def holder_bound_growth(table, alpha, cutoffs, n_nodes=N_NODES):
    """Integral bound at several cutoffs, for exhibiting divergence when alpha >= gamma."""
    out = []
    for c in cutoffs:
        nodes, cf, _ = _resample(table, c, n_nodes, "pchip")
        out.append(float(2.0 ** (1.0 - alpha) / math.pi
                         * np.trapezoid(nodes**alpha * np.abs(cf), nodes)))
    return np.array(out)


def kde_oracle(samples, bandwidth, xs, cut=8.0):
    """Gaussian kernel density estimate on ``xs``.

    Only samples within ``cut`` bandwidths of a grid point contribute
    (their kernel weight is below ``exp(-32)`` otherwise).
    """
    if not bandwidth > 0:
        raise InvalidParams("bandwidth must be positive")
    xs = np.asarray(xs, dtype=np.float64)
    s = np.sort(np.asarray(samples, dtype=np.float64))
    n = len(s)
    lo = np.searchsorted(s, xs - cut * bandwidth, side="left")
    hi = np.searchsorted(s, xs + cut * bandwidth, side="right")
    vals = np.empty(len(xs))
    c = 1.0 / (n * bandwidth * math.sqrt(2.0 * math.pi))
    for i, x in enumerate(xs):
        u = (s[lo[i]:hi[i]] - x) / bandwidth
        vals[i] = c * np.sum(np.exp(-0.5 * u * u))
    return DensityProfile(xs, vals, float("nan"), 0.0, 0.0, float("nan"), 0.0, None, None, None,
                          {"kind": "kde", "bandwidth": float(bandwidth), "n": int(n)})


def gaussian_density(x, mean=0.0, var=1.0):
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-0.5 * (x - mean) ** 2 / var) / math.sqrt(2.0 * math.pi * var)
