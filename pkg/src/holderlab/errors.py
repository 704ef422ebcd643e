"""Exception types raised across holderlab."""


class HolderLabError(Exception):
    """Base class for all library errors."""


class InvalidParams(HolderLabError, ValueError):
    """Parameters violate an operation's precondition."""


class UnsupportedOrder(HolderLabError, ValueError):
    """Derivative or weight order outside the supported range."""


class ValidationFailure(HolderLabError):
    """A coefficient assumption failed on the validation grid.

    Attributes
    ----------
    clause : str
        Which assumption failed, e.g. ``"H1"`` or ``"H3"``.
    point : float or tuple
        Sample point (or pair of points) where the failure was detected.
    """

    def __init__(self, clause, point, message):
        super().__init__(f"[{clause}] {message} (at {point})")
        self.clause = clause
        self.point = point


class NanDivergence(HolderLabError, FloatingPointError):
    """A simulated state became non-finite."""

    def __init__(self, path, step):
        super().__init__(f"non-finite state on path {path} at step {step}")
        self.path = path
        self.step = step


class DecompositionViolation(HolderLabError):
    """The A/C event decomposition failed on too many localized paths."""


class InsufficientHits(HolderLabError):
    """All event counts were zero, so no rate could be fitted."""


class OverflowGuard(HolderLabError, OverflowError):
    """A Girsanov log-weight exceeded the overflow guard."""


class InsufficientSignal(HolderLabError):
    """Too few characteristic-function points above the noise floor."""

    def __init__(self, message, noise_floor, max_usable_theta):
        super().__init__(message)
        self.noise_floor = noise_floor
        self.max_usable_theta = max_usable_theta


class EmptyWindow(HolderLabError, ValueError):
    """The beta window is empty because gamma >= alpha."""


class ThetaTooSmall(HolderLabError, ValueError):
    """|theta| does not exceed (t ^ 1)^(-1/beta)."""


class TailDivergence(HolderLabError, ValueError):
    """A power-law tail model with non-positive exponent was supplied."""


class DegenerateCovariance(HolderLabError):
    """A Malliavin covariance was not strictly positive."""


class UnsupportedPair(HolderLabError, ValueError):
    """The (F, G, order) combination has no registered weight."""


class InsufficientRange(HolderLabError, ValueError):
    """Too few delta values, or too narrow a span, for a scaling fit."""


class ConfigError(HolderLabError, ValueError):
    """A lab configuration is malformed; ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message if key is None or key in message else f"{key}: {message}")
        self.key = key


class ScenarioNotFound(HolderLabError, KeyError):
    """No scenario with the requested name is registered."""
