"""Physical constants, state containers, and Lorentz-factor arithmetic.

Everything in this package works in a single inertial frame, the frame the
controller is written in. Speeds are kept strictly below the speed of light:
any operation that depends on a velocity enforces ``|v| < c * (1 - eps_v)``
and raises instead of clamping silently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, SpeedBoundViolation

SI_SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class PhysConsts:
    """Speed of light and rest mass in whatever unit system the scenario uses."""

    c: float = 1.0
    m0: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.c) and self.c > 0.0):
            raise ValueError(f"speed of light must be positive and finite, got {self.c}")
        if not (math.isfinite(self.m0) and self.m0 > 0.0):
            raise ValueError(f"rest mass must be positive and finite, got {self.m0}")

    @classmethod
    def natural(cls, m0: float = 1.0) -> "PhysConsts":
        """Natural units, c = 1."""
        return cls(c=1.0, m0=m0)

    @classmethod
    def si(cls, m0: float) -> "PhysConsts":
        """SI units, c = 299792458 m/s."""
        return cls(c=SI_SPEED_OF_LIGHT, m0=m0)


@dataclass(frozen=True)
class Tolerances:
    """Numeric guards used throughout.

    eps_v : relative speed-guard margin; speeds at or above c * (1 - eps_v)
        raise SpeedBoundViolation. Scenarios pushing very close to c can
        tighten this (smaller eps_v admits faster states).
    eps_num : tolerance for algebraic identities checked at runtime.
    """

    eps_v: float = 1e-12
    eps_num: float = 1e-9

    def __post_init__(self):
        for name, val in (("eps_v", self.eps_v), ("eps_num", self.eps_num)):
            if not (isinstance(val, float) and 0.0 < val < 1.0):
                raise ValueError(f"{name} must be a float in (0, 1), got {val!r}")


DEFAULT_TOL = Tolerances()


def _as_vector(value, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.ndim != 1 or arr.shape[0] not in (1, 3):
        raise DimensionMismatch(f"{name} must be a scalar or a vector of dimension 1 or 3, "
                                f"got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must have finite components, got {arr}")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class StateVec:
    """Kinematic state (position, velocity), both of dimension 1 or 3.

    Components are stored as read-only float64 arrays; scalars are accepted
    and promoted to shape (1,).
    """

    p: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", _as_vector(self.p, "position"))
        object.__setattr__(self, "v", _as_vector(self.v, "velocity"))
        if self.p.shape != self.v.shape:
            raise DimensionMismatch(f"position and velocity dimensions disagree: "
                                    f"{self.p.shape[0]} vs {self.v.shape[0]}")

    @property
    def dim(self) -> int:
        return self.p.shape[0]

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.v))

    def as_array(self) -> np.ndarray:
        """Stacked [p; v] copy, shape (2*dim,)."""
        return np.concatenate((self.p, self.v))

    @classmethod
    def from_array(cls, arr) -> "StateVec":
        arr = np.asarray(arr, dtype=float)
        if arr.ndim != 1 or arr.shape[0] not in (2, 6):
            raise DimensionMismatch(f"stacked state must have length 2 or 6, got shape {arr.shape}")
        half = arr.shape[0] // 2
        return cls(p=arr[:half], v=arr[half:])


def speed_of(v) -> float:
    """Euclidean norm of a scalar or vector velocity."""
    return float(np.linalg.norm(np.atleast_1d(np.asarray(v, dtype=float))))


def check_speed(v, consts: PhysConsts, tol: Tolerances = DEFAULT_TOL) -> float:
    """Return |v| after enforcing the guard |v| < c * (1 - eps_v)."""
    speed = speed_of(v)
    # "not <" instead of ">=" so NaN speeds are rejected too
    if not speed < consts.c * (1.0 - tol.eps_v):
        raise SpeedBoundViolation(speed=speed, c=consts.c)
    return speed


def lorentz_gamma(v, consts: PhysConsts, tol: Tolerances = DEFAULT_TOL) -> float:
    """gamma(v) = (1 - |v|^2/c^2)^(-1/2); >= 1 with equality only at rest."""
    beta = check_speed(v, consts, tol) / consts.c
    # (1 - b)(1 + b) is better conditioned than 1 - b*b close to the bound
    return 1.0 / math.sqrt((1.0 - beta) * (1.0 + beta))


def bracket_pow(v, consts: PhysConsts, exponent: float,
                tol: Tolerances = DEFAULT_TOL) -> float:
    """(1 - |v|^2/c^2) ** exponent.

    The force laws only use exponents +-1/2 and +-3/2, but any real exponent
    is accepted so products of factors stay expressible: for a fixed v,
    bracket_pow(e1) * bracket_pow(e2) == bracket_pow(e1 + e2).
    """
    beta = check_speed(v, consts, tol) / consts.c
    return ((1.0 - beta) * (1.0 + beta)) ** exponent


def kinetic_energy(v, consts: PhysConsts, tol: Tolerances = DEFAULT_TOL) -> float:
    """(gamma - 1) * m0 * c^2; zero at rest, unbounded as |v| -> c."""
    return (lorentz_gamma(v, consts, tol) - 1.0) * consts.m0 * consts.c ** 2
