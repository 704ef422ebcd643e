"""Monte Carlo laboratory for local Holder regularity of 1D SDE densities.

Submodules
----------
mollifier
    Explicit smooth bumps and ramps with exact derivatives.
coeffs
    Coefficient expressions, assumption checks and the truncation map.
sde
    Euler schemes for the original and localized equations, stopping times
    and event labels.
girsanov
    Window weights, their moment bounds and the approximation term.
charfn
    Localized characteristic functions, decay fits and the bound terms.
density
    Levy inversion, Holder moduli and kernel density oracles.
malliavin
    Discrete Malliavin derivatives and integration-by-parts weights.
lab
    Scenario registry, configs, experiments and the ``lab`` CLI.
"""

from . import charfn, coeffs, density, girsanov, malliavin, mollifier, rng, sde
from ._accel import backend_name
from .charfn import CharFnTable, beta_window, delta_schedule, localized_charfn
from .coeffs import CoefficientSpec, Expr, build_truncated, validate_assumptions
from .density import DensityProfile, invert_localized, levy_invert
from .errors import HolderLabError
from .malliavin import IbpReport, verify_ibp
from .mollifier import BumpParams, eval_f, eval_g, eval_phi
from .sde import PathEnsemble, SimGrid, simulate_euler

__version__ = "0.1.0"

__all__ = ["BumpParams", "CharFnTable", "CoefficientSpec", "DensityProfile", "Expr",
           "HolderLabError", "IbpReport", "PathEnsemble", "SimGrid", "backend_name",
           "beta_window", "build_truncated", "charfn", "coeffs", "delta_schedule", "density",
           "eval_f", "eval_g", "eval_phi", "girsanov", "invert_localized", "levy_invert",
           "localized_charfn", "malliavin", "mollifier", "rng", "sde", "simulate_euler",
           "validate_assumptions", "verify_ibp"]
