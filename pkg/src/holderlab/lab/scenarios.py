"""Named SDE scenarios with optional closed-form oracles.

A scenario is built from a window description (``eps``, ``y0``, ``x0``,
``t``) by a builder, so overriding the window keeps coefficients centred
and declared constants consistent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..coeffs import CoefficientSpec, Expr
from ..errors import ConfigError, ScenarioNotFound
from ..mollifier import eval_phi


@dataclass(frozen=True)
class Oracle:
    """Closed-form Gaussian law ``N(mean, var)`` of ``X_t``."""

    kind: str
    mean: float
    var: float

    def density(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.exp(-0.5 * (x - self.mean) ** 2 / self.var) / math.sqrt(2 * math.pi * self.var)

    def charfn(self, theta):
        th = np.asarray(theta, dtype=np.float64)
        return np.exp(1j * th * self.mean - 0.5 * self.var * th * th)

    def localized_charfn(self, theta, y0, eps, a=None, n_quad=20001):
        """``E[exp(i theta X) phi_eps(X - y0)]`` by quadrature over ``B_{2 eps}(y0)``."""
        x = np.linspace(y0 - 2 * eps, y0 + 2 * eps, n_quad)
        w = eval_phi(eps, a, x - y0) * self.density(x)
        th = np.atleast_1d(np.asarray(theta, dtype=np.float64))
        return np.array([np.trapezoid(w * np.exp(1j * s * x), x) for s in th])

    def as_dict(self):
        return {"kind": self.kind, "mean": self.mean, "var": self.var}


@dataclass(frozen=True)
class Scenario:
    """Registry entry.

    Attributes
    ----------
    name : str
    spec : CoefficientSpec
    oracle : Oracle or None
    description : str
    n_steps : int
        Default Euler steps on ``[0, t]``.
    builder : callable or None
        ``builder(eps=, y0=, x0=, t=)`` returning ``(spec, oracle)``.
    """

    name: str
    spec: CoefficientSpec
    oracle: Oracle | None = None
    description: str = ""
    n_steps: int = 400
    builder: object = field(default=None, repr=False, compare=False)

    def configure(self, **kw):
        """Scenario with window or constant overrides applied."""
        kw = {k: v for k, v in kw.items() if v is not None}
        if not kw:
            return self
        win = {k: kw.pop(k) for k in ("eps", "y0", "x0", "t") if k in kw}
        if self.builder is not None and win:
            base = {"eps": self.spec.eps, "y0": self.spec.y0, "x0": self.spec.x0, "t": self.spec.t}
            base.update(win)
            spec, oracle = self.builder(**base)
        else:
            spec = _replace_spec(self.spec, win)
            oracle = self.oracle if not win else None
        if "T" not in kw and spec.t > spec.T:
            kw["T"] = spec.t
        spec = _replace_spec(spec, kw)
        return replace(self, spec=spec, oracle=oracle)


def _replace_spec(spec, kw):
    if not kw:
        return spec
    try:
        return replace(spec, **kw)
    except TypeError as exc:
        raise ConfigError(str(exc), key=next(iter(kw))) from exc


def weierstrass_holder_bound(c, alpha):
    """Holder constant of ``c sum 2^(-k alpha) cos(2^k x)`` from the dyadic split at ``|h|``."""
    return c * 2.0**alpha * (1.0 / (2.0 ** (1.0 - alpha) - 1.0) + 2.0 / (1.0 - 2.0**-alpha))


def _gaussian(eps, y0, x0, t):
    spec = CoefficientSpec(Expr.const(1.0), Expr.const(0.0), x0, y0, eps, 0.5, 0.5, 0.0,
                           T=max(t, 1.0), t=t)
    return spec, Oracle("gaussian", x0, t)


def _ou(eps, y0, x0, t):
    # psi(x) = -x has Holder quotient |x - y|^(1/2) <= (12 eps)^(1/2) on B_{6 eps}
    spec = CoefficientSpec(Expr.const(1.0), Expr.poly(-1.0, 0.0, 1), x0, y0, eps, 0.5, 0.5,
                           math.sqrt(12.0 * eps), T=max(t, 1.0), t=t)
    return spec, Oracle("ou", x0 * math.exp(-t), 0.5 * (1.0 - math.exp(-2.0 * t)))


def _holder05(eps, y0, x0, t):
    spec = CoefficientSpec(Expr.const(1.0), Expr.abspow(1.0, y0, 0.5), x0, y0, eps, 0.5, 0.5,
                           1.0, T=max(t, 1.0), t=t)
    return spec, None


def _holder_var(eps, y0, x0, t):
    spec = CoefficientSpec(Expr.const(2.0) + Expr.sin(1.0, 1.0, 0.0), Expr.abspow(1.0, y0, 0.5),
                           x0, y0, eps, 0.5, 0.5, 1.06, T=max(t, 1.0), t=t)
    return spec, None


def _constdrift(eps, y0, x0, t):
    spec = CoefficientSpec(Expr.const(1.0), Expr.const(1.0), x0, y0, eps, 0.5, 0.5, 0.0,
                           T=max(t, 1.0), t=t)
    return spec, Oracle("gaussian", x0 + t, t)


def _weierstrass(alpha):
    def build(eps, y0, x0, t):
        spec = CoefficientSpec(Expr.const(1.0), Expr.weierstrass(0.1, alpha, 12), x0, y0, eps,
                               0.5, alpha, weierstrass_holder_bound(0.1, alpha),
                               T=max(t, 1.0), t=t)
        return spec, None

    return build


class Registry:
    """Name-keyed scenario collection; duplicate names are rejected."""

    def __init__(self):
        self._items = {}

    def add(self, scenario):
        if scenario.name in self._items:
            raise ConfigError(f"scenario {scenario.name!r} is already registered", key="name")
        self._items[scenario.name] = scenario
        return scenario

    def get(self, name):
        try:
            return self._items[name]
        except KeyError:
            raise ScenarioNotFound(f"unknown scenario {name!r}; known: "
                                   f"{', '.join(sorted(self._items))}") from None

    def names(self):
        return sorted(self._items)

    def __contains__(self, name):
        return name in self._items

    def __iter__(self):
        return (self._items[k] for k in self.names())

    def __len__(self):
        return len(self._items)


def _entry(name, builder, description, n_steps, eps, y0=0.0, x0=0.0, t=1.0):
    spec, oracle = builder(eps, y0, x0, t)
    return Scenario(name, spec, oracle, description, n_steps, builder)


def default_registry():
    reg = Registry()
    reg.add(_entry("gaussian", _gaussian, "sigma = 1, b = 0; X_t ~ N(x0, t)", 100, 4.0))
    reg.add(_entry("ou", _ou, "sigma = 1, b = -x (truncated); Ornstein-Uhlenbeck", 400, 1.5))
    reg.add(_entry("holder05", _holder05, "sigma = 1, b = |x - y0|^(1/2)", 400, 1.0))
    reg.add(_entry("holder-var", _holder_var, "sigma = 2 + sin x, b = |x - y0|^(1/2)", 400, 1.0))
    reg.add(_entry("constdrift", _constdrift, "sigma = 1, b = 1; constant psi", 100, 2.0))
    reg.add(_entry("weierstrass05", _weierstrass(0.5),
                   "sigma = 1, b = 0.1 sum 2^(-k/2) cos(2^k x), 12 terms", 400, 2.0))
    reg.add(_entry("weierstrass075", _weierstrass(0.75),
                   "sigma = 1, b = 0.1 sum 2^(-3k/4) cos(2^k x), 12 terms", 400, 2.0))
    return reg


REGISTRY = default_registry()


def list_scenarios(registry=None):
    """Registry dump as plain dicts."""
    reg = REGISTRY if registry is None else registry
    return [scenario_echo(s) for s in reg]


def scenario_echo(sc):
    """Serializable description; parses back through the config loader."""
    s = sc.spec
    d = {"name": sc.name, "eps": s.eps, "y0": s.y0, "x0": s.x0, "t": s.t, "T": s.T,
         "sigma0": s.sigma0, "alpha": s.alpha, "holder_const": s.holder_const,
         "sigma": [list(term) for term in s.sigma.to_list()],
         "b": [list(term) for term in s.b.to_list()], "description": sc.description}
    if sc.oracle is not None:
        d["oracle"] = sc.oracle.as_dict()
    return d
