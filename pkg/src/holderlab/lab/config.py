"""TOML configuration with ``[scenario]``, ``[experiment]`` and ``[mc]`` sections.

Every key is declared in a schema with its type, default and range. Unknown
keys, wrong types and out-of-range values raise :class:`ConfigError`
naming the key; the resolved config (defaults filled in) is what manifests
record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import tomli
import tomli_w

from ..coeffs import Expr
from ..errors import ConfigError, HolderLabError
from .scenarios import REGISTRY, Oracle, Scenario

REQUIRED = object()
EXPERIMENTS = ("E1", "E2", "E3", "E4", "E5", "E6")


@dataclass(frozen=True)
class Param:
    kind: str
    default: object = None
    lo: float | None = None
    hi: float | None = None
    lo_open: bool = False
    choices: tuple | None = None


def _p(kind, default=None, lo=None, hi=None, lo_open=False, choices=None):
    return Param(kind, default, lo, hi, lo_open, choices)


SCENARIO_KEYS = {
    "name": _p("str", REQUIRED),
    "eps": _p("float", REQUIRED, 0.0, lo_open=True),
    "y0": _p("float"),
    "x0": _p("float"),
    "t": _p("float", None, 0.0, lo_open=True),
    "T": _p("float", None, 0.0, lo_open=True),
    "sigma0": _p("float", None, 0.0, lo_open=True),
    "alpha": _p("float", None, 0.0, 1.0, lo_open=True),
    "holder_const": _p("float", None, 0.0),
    "sigma": _p("terms"),
    "b": _p("terms"),
    "description": _p("str"),
    "oracle": _p("oracle"),
}

MC_KEYS = {
    "n_paths": _p("int", 10_000, 100),
    "n_steps": _p("int", None, 1),
    "seed": _p("int", 1, 0, 2**63 - 1),
}

_COMMON = {
    "id": _p("str", REQUIRED, choices=EXPERIMENTS),
    "outdir": _p("str"),
    "svg": _p("bool", True),
}

EXPERIMENT_KEYS = {
    "E1": {"cutoff": _p("float", 8.0, 0.0, lo_open=True),
           "n_uniform": _p("int", 257, 17),
           "theta_max": _p("float", 32.0, 1.0, lo_open=True),
           "per_decade": _p("int", 32, 4),
           "gamma": _p("float", None, 0.0),
           "goal_C": _p("float", 2.0, 0.0, lo_open=True),
           "est_n": _p("int", None, 1),
           "est_n2": _p("int", None, 1),
           "beta": _p("float", None, 0.0, 2.0, lo_open=True),
           "cf_check_theta": _p("float", 3.0, 0.0),
           "cf_truncation": _p("float", 1e-6, 0.0),
           "n_sigma": _p("float", 4.0, 0.0, lo_open=True)},
    "E2": {"cutoff": _p("float", 8.0, 0.0, lo_open=True),
           "n_uniform": _p("int", 257, 17),
           "n_x": _p("int", 401, 64),
           "bandwidth": _p("float", 0.05, 0.0, lo_open=True),
           "tol_center": _p("float", 5e-3, 0.0, lo_open=True),
           "tol_sup": _p("float", 1e-2, 0.0, lo_open=True),
           "interp": _p("str", "pchip", choices=("pchip", "cubic")),
           "n_sigma": _p("float", 4.0, 0.0, lo_open=True)},
    "E3": {"deltas": _p("floats", [0.01, 0.04, 0.16], 0.0, 1.0, lo_open=True),
           "ps": _p("floats", [2.0, 4.0], 1.0, lo_open=True),
           "m": _p("int", 64, 1),
           "slack": _p("float", 1.02, 1.0),
           "n_sigma": _p("float", 4.0, 0.0, lo_open=True),
           "equality_n_se": _p("float", 2.0, 0.0, lo_open=True),
           "cross_theta": _p("float", 1.0, 0.0, lo_open=True)},
    "E4": {"deltas": _p("floats", None, 0.0, 1.0, lo_open=True),
           "n_window": _p("int", 64, 1),
           "pre_dt": _p("float", 1e-2, 0.0, 1.0, lo_open=True),
           "max_exception_fraction": _p("float", 1e-3, 0.0, 1.0)},
    "E5": {"delta": _p("float", 0.1, 0.0, 1.0, lo_open=True),
           "m": _p("int", 64, 2),
           "tests": _p("strs", ["sin", "poly", "bump"], choices=("sin", "poly", "bump")),
           "n_sigma": _p("float", 4.0, 0.0, lo_open=True),
           "scaling_deltas": _p("floats", [0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625], 0.0, 1.0,
                                lo_open=True),
           "scaling_paths": _p("int", None, 100),
           "tol_closed": _p("float", 0.1, 0.0, lo_open=True),
           "tol_general": _p("float", 0.15, 0.0, lo_open=True),
           "hermite_atol": _p("float", 1e-12, 0.0, lo_open=True)},
    "E6": {"deltas": _p("floats", None, 0.0, 1.0, lo_open=True),
           "m": _p("int", 64, 1),
           "pre_dt": _p("float", 1e-2, 0.0, 1.0, lo_open=True),
           "tol": _p("float", 0.15, 0.0, lo_open=True),
           "companion": _p("str", "")},
}

SECTIONS = ("scenario", "experiment", "mc")


def _where(section, key):
    return f"{section}.{key}"


def _coerce(section, key, p, v):
    where = _where(section, key)

    def num(x, integer):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ConfigError(f"expected a number, got {x!r}", key=where)
        if integer:
            if isinstance(x, float) and not x.is_integer():
                raise ConfigError(f"expected an integer, got {x!r}", key=where)
            x = int(x)
        else:
            x = float(x)
            if not math.isfinite(x):
                raise ConfigError("value must be finite", key=where)
        lo_bad = p.lo is not None and (x <= p.lo if p.lo_open else x < p.lo)
        if lo_bad or (p.hi is not None and x > p.hi):
            need = []
            if p.lo is not None:
                need.append(f"{'>' if p.lo_open else '>='} {p.lo}")
            if p.hi is not None:
                need.append(f"<= {p.hi}")
            raise ConfigError(f"value {x!r} out of range (need {' and '.join(need)})", key=where)
        return x

    if p.kind in ("float", "int"):
        return num(v, p.kind == "int")
    if p.kind == "floats":
        if not isinstance(v, list) or not v:
            raise ConfigError("expected a non-empty list of numbers", key=where)
        return [num(x, False) for x in v]
    if p.kind == "bool":
        if not isinstance(v, bool):
            raise ConfigError(f"expected true or false, got {v!r}", key=where)
        return v
    if p.kind == "str":
        if not isinstance(v, str):
            raise ConfigError(f"expected a string, got {v!r}", key=where)
        if p.choices and v not in p.choices:
            raise ConfigError(f"{v!r} is not one of {', '.join(p.choices)}", key=where)
        return v
    if p.kind == "strs":
        if not isinstance(v, list) or not v or not all(isinstance(x, str) for x in v):
            raise ConfigError("expected a non-empty list of strings", key=where)
        bad = [x for x in v if p.choices and x not in p.choices]
        if bad:
            raise ConfigError(f"{bad[0]!r} is not one of {', '.join(p.choices)}", key=where)
        return list(v)
    if p.kind == "terms":
        try:
            return Expr.from_list(v).to_list()
        except HolderLabError as exc:
            raise ConfigError(str(exc), key=where) from exc
    if p.kind == "oracle":
        if (not isinstance(v, dict) or set(v) != {"kind", "mean", "var"}
                or not isinstance(v["kind"], str)):
            raise ConfigError("oracle needs exactly kind, mean and var", key=where)
        return {"kind": v["kind"], "mean": num(v["mean"], False), "var": num(v["var"], False)}
    raise AssertionError(p.kind)


def _section(raw, section, schema):
    got = raw.get(section, {})
    if not isinstance(got, dict):
        raise ConfigError("expected a table", key=section)
    out = {}
    for k in got:
        if k not in schema:
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(schema))})",
                              key=_where(section, k))
    for k, p in schema.items():
        if k in got:
            out[k] = _coerce(section, k, p, got[k])
        elif p.default is REQUIRED:
            raise ConfigError("missing required key", key=_where(section, k))
        elif p.default is not None:
            out[k] = list(p.default) if isinstance(p.default, list) else p.default
    return out


def parse_config(raw):
    """Validate a config mapping and fill in defaults.

    Returns
    -------
    dict
        ``{"scenario": ..., "experiment": ..., "mc": ...}`` with every
        experiment and Monte Carlo default made explicit.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a table of sections")
    for k in raw:
        if k not in SECTIONS:
            raise ConfigError(f"unknown section (allowed: {', '.join(SECTIONS)})", key=k)
    if "experiment" not in raw:
        raise ConfigError("missing section", key="experiment")
    if "scenario" not in raw:
        raise ConfigError("missing section", key="scenario")
    exp_raw = raw["experiment"]
    if not isinstance(exp_raw, dict):
        raise ConfigError("expected a table", key="experiment")
    eid = _coerce("experiment", "id", _COMMON["id"], exp_raw.get("id", None)) \
        if "id" in exp_raw else None
    if eid is None:
        raise ConfigError("missing required key", key="experiment.id")
    cfg = {"scenario": _section(raw, "scenario", SCENARIO_KEYS),
           "experiment": _section(raw, "experiment", {**_COMMON, **EXPERIMENT_KEYS[eid]}),
           "mc": _section(raw, "mc", MC_KEYS)}
    resolve_scenario(cfg)
    return cfg


def load_config(path):
    """Read and validate a TOML config file."""
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(raw)


def dumps_config(cfg):
    """TOML text of a (resolved) config; ``None`` values are omitted."""
    clean = {s: {k: v for k, v in cfg.get(s, {}).items() if v is not None} for s in SECTIONS
             if s in cfg}
    return tomli_w.dumps(clean)


def resolve_scenario(cfg, registry=None):
    """Scenario described by the ``[scenario]`` section.

    Names in the registry are configured with the window overrides; a name
    outside the registry needs explicit ``sigma`` and ``b`` term lists.
    """
    from ..coeffs import CoefficientSpec

    reg = REGISTRY if registry is None else registry
    sc = cfg["scenario"]
    over = {k: sc.get(k) for k in ("eps", "y0", "x0", "t", "T", "sigma0", "alpha",
                                   "holder_const")}
    custom = "sigma" in sc or "b" in sc
    try:
        if custom:
            if "sigma" not in sc or "b" not in sc:
                raise ConfigError("a custom scenario needs both sigma and b",
                                  key="scenario.sigma" if "sigma" not in sc else "scenario.b")
            t = over["t"] if over["t"] is not None else 1.0
            spec = CoefficientSpec(
                Expr.from_list(sc["sigma"]), Expr.from_list(sc["b"]),
                over["x0"] or 0.0, over["y0"] or 0.0, over["eps"],
                over["sigma0"] if over["sigma0"] is not None else 0.5,
                over["alpha"] if over["alpha"] is not None else 0.5,
                over["holder_const"] if over["holder_const"] is not None else 1.0,
                T=over["T"] if over["T"] is not None else max(t, 1.0), t=t)
            orc = sc.get("oracle")
            return Scenario(sc["name"], spec, Oracle(**orc) if orc else None,
                            sc.get("description", ""))
        return reg.get(sc["name"]).configure(**over)
    except ConfigError:
        raise
    except HolderLabError as exc:
        if isinstance(exc, KeyError):
            raise
        raise ConfigError(str(exc), key="scenario") from exc


def echo_config(scenario):
    """``[scenario]`` section reproducing ``scenario`` when parsed back."""
    from .scenarios import scenario_echo

    d = scenario_echo(scenario)
    return {k: v for k, v in d.items() if k in SCENARIO_KEYS}
