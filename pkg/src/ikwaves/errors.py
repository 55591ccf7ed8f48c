"""Exception types shared across the package."""


class IkwavesError(Exception):
    """Base class for all errors raised by ikwaves."""


class NonFiniteField(IkwavesError):
    """A grid field contains NaN or infinite entries."""


class BadExponents(IkwavesError):
    """The vertical-exponent list violates its constraints."""


class DepthCollapse(IkwavesError):
    """The water column depth is not strictly positive everywhere."""


class EllipticNoConverge(IkwavesError):
    """The iterative elliptic solve did not reach the requested tolerance.

    Carries the relative-residual history so callers can inspect stagnation.
    """

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])


class PadeDegenerate(IkwavesError):
    """The rational-approximant matching system is singular or inaccurate."""


class GuardTripped(IkwavesError):
    """A run-time guard aborted the simulation."""

    def __init__(self, reason, t, value):
        super().__init__(f"guard {reason!r} tripped at t={t:.6g} (value {value:.6g})")
        self.reason = reason
        self.t = t
        self.value = value


class ConfigError(IkwavesError):
    """A configuration file or CLI argument is invalid."""
