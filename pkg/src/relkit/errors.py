"""Exception types shared across the toolkit.

Errors raised mid-integration (speed bound, step budget, non-finite state)
carry the trajectory accumulated so far in their ``partial`` attribute so
callers can inspect or persist what happened before the abort.
"""

from __future__ import annotations


class RelkitError(Exception):
    """Base class for all toolkit errors."""


class SpeedBoundViolation(RelkitError):
    """A speed reached or exceeded the guarded fraction of the speed of light."""

    def __init__(self, message: str | None = None, *, speed: float | None = None,
                 c: float | None = None):
        if message is None:
            if speed is not None and c is not None:
                message = f"speed {speed:.17g} violates |v| < c = {c:.17g} (guard margin applied)"
            else:
                message = "speed bound violated"
        super().__init__(message)
        self.speed = speed
        self.c = c
        self.partial = None


class DimensionMismatch(RelkitError):
    """Vector arguments disagree in dimension, or a dimension is not 1 or 3."""


class NonOrthogonalInput(RelkitError):
    """A parallel/perpendicular pair failed its alignment check."""


class InvalidPoleSet(RelkitError):
    """Requested closed-loop poles are unstable, unpaired, or of the wrong count."""


class HorizonExhausted(RelkitError):
    """Steering horizon doubling hit its cap without a subluminal plan."""


class StepCountExceeded(RelkitError):
    """The integrator ran out of its step budget before reaching t_end."""

    def __init__(self, message: str = "integrator step budget exhausted"):
        super().__init__(message)
        self.partial = None


class NonFiniteState(RelkitError):
    """The integrated state left the space of finite floats."""

    def __init__(self, message: str = "state became non-finite during integration"):
        super().__init__(message)
        self.partial = None


class ConfigParseError(RelkitError):
    """A scenario file is malformed, has unknown keys, or fails validation."""
