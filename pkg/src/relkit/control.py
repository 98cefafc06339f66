"""Controller design against the linear model and speed-aware wrapping.

Design happens on the double integrator exposed by the input transforms;
the wrapped laws push the designed virtual input w through the inverse
transform at the current velocity. Unwrapped variants skip that step (the
force a Newtonian designer would apply) and exist for comparison studies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .core import DEFAULT_TOL, PhysConsts, StateVec, Tolerances, bracket_pow, lorentz_gamma
from .errors import DimensionMismatch, InvalidPoleSet
from .linearize import force_from_virtual_raw, linearized_model

OF3D_MODES = ("verbatim", "composed")


def _gain_matrix(K, dim: int) -> np.ndarray:
    if isinstance(K, StateFeedbackGain):
        K = K.K
    arr = np.asarray(K, dtype=float)
    if arr.shape != (dim, 2 * dim):
        raise DimensionMismatch(f"gain must have shape {(dim, 2 * dim)}, got {arr.shape}")
    return arr


@dataclass(frozen=True)
class StateFeedbackGain:
    """Full-state gain K for w = -K [p; v]; shape (1, 2) or (3, 6)."""

    K: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.K, dtype=float).copy()
        if arr.shape not in ((1, 2), (3, 6)):
            raise DimensionMismatch(f"gain shape must be (1, 2) or (3, 6), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("gain entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "K", arr)

    @property
    def dim(self) -> int:
        return self.K.shape[0]


def _quadratic_factors(poles) -> list[tuple[float, float]]:
    """Group a conjugate-closed pole multiset into (a0, a1) with s^2 + a1 s + a0.

    Complex poles must come in conjugate pairs; leftover real poles are paired
    off in ascending order. All real parts must be negative.
    """
    ps = [complex(p) for p in poles]
    for p in ps:
        if not (math.isfinite(p.real) and math.isfinite(p.imag)):
            raise InvalidPoleSet(f"pole {p} is not finite")
        if p.real >= 0.0:
            raise InvalidPoleSet(f"pole {p} is not strictly stable (Re < 0 required)")
    kind = lambda p: abs(p.imag) <= 1e-12 * max(1.0, abs(p))
    reals = sorted(p.real for p in ps if kind(p))
    upper = sorted((p for p in ps if not kind(p) and p.imag > 0), key=lambda p: (p.real, p.imag))
    lower = sorted((p for p in ps if not kind(p) and p.imag < 0), key=lambda p: (p.real, -p.imag))
    if len(upper) != len(lower):
        raise InvalidPoleSet("complex poles must come in conjugate pairs")
    factors = []
    for a, b in zip(upper, lower):
        if abs(a - b.conjugate()) > 1e-9 * max(1.0, abs(a)):
            raise InvalidPoleSet(f"poles {a} and {b} are not a conjugate pair")
        factors.append(((a * b).real, -(a + b).real))
    if len(reals) % 2 != 0:
        raise InvalidPoleSet("an even number of real poles is required to form second-order factors")
    for r1, r2 in zip(reals[0::2], reals[1::2]):
        factors.append((r1 * r2, -(r1 + r2)))
    return factors


def design_pole_placement(poles, dim: int, consts: PhysConsts) -> StateFeedbackGain:
    """Gain placing the closed-loop poles of the linearized loop.

    Matching s^2 + a1 s + a0 per axis gives, for dim 1, K = m0 [a0, a1]
    (w carries force units there) and, for dim 3, K = [diag(a0) diag(a1)]
    with one conjugate-closed pair per axis. Repeated poles are fine; the
    construction never goes through an eigensolver.
    """
    poles = list(poles)
    if dim == 1:
        if len(poles) != 2:
            raise InvalidPoleSet(f"dim 1 needs exactly 2 poles, got {len(poles)}")
        (a0, a1), = _quadratic_factors(poles)
        return StateFeedbackGain(np.array([[consts.m0 * a0, consts.m0 * a1]]))
    if dim == 3:
        if len(poles) != 6:
            raise InvalidPoleSet(f"dim 3 needs exactly 6 poles, got {len(poles)}")
        factors = sorted(_quadratic_factors(poles))
        if len(factors) != 3:
            raise InvalidPoleSet("dim 3 needs poles that group into three second-order factors")
        a0 = np.diag([f[0] for f in factors])
        a1 = np.diag([f[1] for f in factors])
        return StateFeedbackGain(np.hstack((a0, a1)))
    raise DimensionMismatch(f"design_pole_placement supports dim 1 or 3, got {dim}")


def closed_loop_matrix(K, dim: int, consts: PhysConsts) -> np.ndarray:
    """A - B K of the linearized loop; eigenvalues are the placed poles."""
    model = linearized_model(dim, consts)
    return model.A - model.B @ _gain_matrix(K, dim)


@dataclass(frozen=True)
class Reference:
    """Piecewise-constant position reference r(t) of dimension 1 or 3.

    Either a single constant value or a step schedule [(t_k, r_k), ...] with
    strictly increasing t_k; before the first knot the first value holds.
    The rate is zero everywhere (steps excluded).
    """

    dim: int
    constant: np.ndarray | None = None
    knots: tuple = ()

    def __post_init__(self):
        if self.dim not in (1, 3):
            raise DimensionMismatch(f"reference dimension must be 1 or 3, got {self.dim}")

    @classmethod
    def const(cls, value, dim: int) -> "Reference":
        arr = np.broadcast_to(np.asarray(value, dtype=float), (dim,)).copy()
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"reference values must be finite, got {arr}")
        arr.setflags(write=False)
        return cls(dim=dim, constant=arr)

    @classmethod
    def steps(cls, schedule, dim: int) -> "Reference":
        knots = []
        prev_t = -math.inf
        for t_k, val in schedule:
            t_k = float(t_k)
            if not t_k > prev_t:
                raise ValueError("schedule times must be strictly increasing")
            prev_t = t_k
            arr = np.broadcast_to(np.asarray(val, dtype=float), (dim,)).copy()
            if not (math.isfinite(t_k) and np.all(np.isfinite(arr))):
                raise ValueError(f"schedule entries must be finite, got ({t_k}, {arr})")
            arr.setflags(write=False)
            knots.append((t_k, arr))
        if not knots:
            raise ValueError("schedule must contain at least one knot")
        return cls(dim=dim, knots=tuple(knots))

    def value(self, t: float) -> np.ndarray:
        if self.constant is not None:
            return self.constant
        current = self.knots[0][1]
        for t_k, val in self.knots:
            if t_k <= t:
                current = val
            else:
                break
        return current

    def rate(self, t: float) -> np.ndarray:
        return np.zeros(self.dim)


@dataclass(frozen=True)
class PidGains:
    """Proportional/integral/derivative gains; scalars or per-axis arrays.

    All components must be nonnegative and at least one positive.
    """

    kp: float | np.ndarray = 0.0
    ki: float | np.ndarray = 0.0
    kd: float | np.ndarray = 0.0

    def __post_init__(self):
        any_positive = False
        for name in ("kp", "ki", "kd"):
            val = getattr(self, name)
            arr = np.asarray(val, dtype=float)
            if arr.ndim == 0:
                val = float(arr)
            elif arr.shape == (3,):
                val = arr.copy()
                val.setflags(write=False)
            else:
                raise DimensionMismatch(f"{name} must be a scalar or a length-3 array, got shape {arr.shape}")
            if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite and nonnegative, got {val}")
            if np.any(arr > 0.0):
                any_positive = True
            object.__setattr__(self, name, val)
        if not any_positive:
            raise ValueError("at least one PID gain must be positive")

    def term(self, e, integral, e_dot):
        return self.kp * e + self.ki * integral + self.kd * e_dot


@dataclass
class PidState:
    """Running integral plus the previous error sample (trapezoid memory)."""

    integral: float | np.ndarray = 0.0
    prev_error: float | np.ndarray | None = None


@dataclass(frozen=True)
class StateFeedbackLaw:
    """w = -K [p; v], wrapped through the inverse transform unless disabled."""

    gain: StateFeedbackGain
    wrapped: bool = True


@dataclass(frozen=True)
class OutputFeedbackLaw:
    """w = l(y) computed from the position output alone.

    For dim 3 the wrapped law has two modes: "verbatim" applies

        u = m0 gamma^3 (y_dot . l) y_dot / c^2 - m0 gamma l

    (note the minus on the second term), while "composed" pushes l(y)
    through the same inverse transform as every other law. They differ by
    exactly 2 m0 gamma l(y), so only a zero map makes them agree; composed
    is the variant that linearizes the loop, verbatim (the default) keeps
    the historical sign convention, under which l must be negated to
    stabilize. Pick deliberately.
    """

    l: Callable
    wrapped: bool = True
    of3d_mode: str = "verbatim"

    def __post_init__(self):
        if self.of3d_mode not in OF3D_MODES:
            raise ValueError(f"of3d_mode must be one of {OF3D_MODES}, got {self.of3d_mode!r}")


@dataclass(frozen=True)
class PidLaw:
    """PID on the position error with the derivative taken on the error.

    i_max, when set, clamps each component of the running integral.
    """

    gains: PidGains
    wrapped: bool = True
    i_max: float | None = None

    def __post_init__(self):
        if self.i_max is not None and not self.i_max > 0.0:
            raise ValueError(f"i_max must be positive when set, got {self.i_max}")


ControlLaw = Union[StateFeedbackLaw, OutputFeedbackLaw, PidLaw]


def law_needs_integral(law: ControlLaw) -> bool:
    return isinstance(law, PidLaw)


def _of3d_verbatim(y_dot: np.ndarray, l_val: np.ndarray, consts: PhysConsts,
                   tol: Tolerances) -> np.ndarray:
    gamma = lorentz_gamma(y_dot, consts, tol)
    radial = consts.m0 * gamma ** 3 * (float(y_dot @ l_val) / consts.c ** 2) * y_dot
    return radial - consts.m0 * gamma * l_val


def evaluate_law(law: ControlLaw, p: np.ndarray, v: np.ndarray, r: np.ndarray,
                 r_rate: np.ndarray, integral, consts: PhysConsts,
                 tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Physical force commanded by a law at raw state arrays (simulator path)."""
    dim = p.shape[0]
    if isinstance(law, StateFeedbackLaw):
        K = law.gain.K
        if K.shape[0] != dim:
            raise DimensionMismatch(f"gain dimension {K.shape[0]} does not match state dimension {dim}")
        w = -(K[:, :dim] @ p) - (K[:, dim:] @ v)
    elif isinstance(law, OutputFeedbackLaw):
        w = np.atleast_1d(np.asarray(law.l(p), dtype=float))
        if w.shape != (dim,):
            raise DimensionMismatch(f"l(y) must have dimension {dim}, got shape {w.shape}")
        if law.wrapped and dim == 3 and law.of3d_mode == "verbatim":
            return _of3d_verbatim(v, w, consts, tol)
    elif isinstance(law, PidLaw):
        e = r - p
        e_dot = r_rate - v
        if law.i_max is not None:
            integral = np.clip(integral, -law.i_max, law.i_max)
        w = np.atleast_1d(np.asarray(law.gains.term(e, integral, e_dot), dtype=float))
    else:
        raise TypeError(f"unknown control law {type(law).__name__}")
    if law.wrapped:
        return force_from_virtual_raw(v, w, consts, tol)
    return w if dim == 1 else consts.m0 * w


def relativistic_state_feedback_1d(x: StateVec, K, consts: PhysConsts,
                                   tol: Tolerances = DEFAULT_TOL) -> float:
    """u = (1 - v^2/c^2)^(-3/2) * (-K [p; v]) for the scalar plant."""
    if x.dim != 1:
        raise DimensionMismatch(f"relativistic_state_feedback_1d needs dim 1, got {x.dim}")
    K = _gain_matrix(K, 1)
    w = float(-(K @ x.as_array())[0])
    return bracket_pow(x.v, consts, -1.5, tol) * w


def relativistic_state_feedback_3d(x: StateVec, K, consts: PhysConsts,
                                   tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Expanded 3D law: with w = -K [p; v],

        u = m0 gamma^3 (v . w) v / c^2 + m0 gamma w.
    """
    if x.dim != 3:
        raise DimensionMismatch(f"relativistic_state_feedback_3d needs dim 3, got {x.dim}")
    K = _gain_matrix(K, 3)
    w = -(K @ x.as_array())
    return force_from_virtual_raw(x.v, w, consts, tol)


def relativistic_output_feedback(y, y_dot, l_map, consts: PhysConsts,
                                 tol: Tolerances = DEFAULT_TOL,
                                 mode: str = "verbatim"):
    """Wrapped output feedback from the position output and its rate.

    l_map may be a callable evaluated at y or an already-evaluated value.
    Scalar output: u = (1 - y_dot^2/c^2)^(-3/2) l(y). Vector output: the
    "verbatim" form (minus on the transverse term) or the "composed" inverse
    transform, selected by mode.
    """
    if mode not in OF3D_MODES:
        raise ValueError(f"mode must be one of {OF3D_MODES}, got {mode!r}")
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    l_val = l_map(y_arr) if callable(l_map) else l_map
    l_val = np.atleast_1d(np.asarray(l_val, dtype=float))
    dim = y_arr.shape[0]
    if dim not in (1, 3) or l_val.shape != (dim,):
        raise DimensionMismatch(f"output and l(y) must share dimension 1 or 3, got {y_arr.shape} and {l_val.shape}")
    v_arr = np.atleast_1d(np.asarray(y_dot, dtype=float))
    if v_arr.shape != (dim,):
        raise DimensionMismatch(f"y_dot must have dimension {dim}, got shape {v_arr.shape}")
    if dim == 1:
        return bracket_pow(v_arr, consts, -1.5, tol) * float(l_val[0])
    if mode == "verbatim":
        return _of3d_verbatim(v_arr, l_val, consts, tol)
    return force_from_virtual_raw(v_arr, l_val, consts, tol)


def pid_sample_linear(gains: PidGains, e, state: PidState, e_dot, dt: float, *,
                      i_max: float | None = None) -> tuple[np.ndarray, PidState]:
    """Linear part of one sampled PID update: advance the integral, form w.

    The integral advances by the trapezoid rule using the previous error
    sample; the first call only primes that memory. Returns the virtual
    input (array) and the advanced state.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    e_arr = np.atleast_1d(np.asarray(e, dtype=float))
    dim = e_arr.shape[0]
    e_dot_arr = np.atleast_1d(np.asarray(e_dot, dtype=float))
    if e_dot_arr.shape != (dim,):
        raise DimensionMismatch("e and e_dot must share one dimension")
    integral = np.atleast_1d(np.asarray(state.integral, dtype=float)) * np.ones(dim)
    if state.prev_error is not None:
        prev = np.atleast_1d(np.asarray(state.prev_error, dtype=float))
        integral = integral + 0.5 * (prev + e_arr) * dt
    if i_max is not None:
        integral = np.clip(integral, -i_max, i_max)
    w = np.atleast_1d(np.asarray(gains.term(e_arr, integral, e_dot_arr), dtype=float))
    return w, PidState(integral=integral, prev_error=e_arr.copy())


def pid_nonconstant_ref_step(e, state: PidState, gains: PidGains, e_dot, r_dot,
                             dt: float, consts: PhysConsts,
                             tol: Tolerances = DEFAULT_TOL, *,
                             i_max: float | None = None):
    """One sampled PID update with a known reference rate.

    Wraps the linear update of pid_sample_linear through the inverse
    transform at the measured output rate y_dot = r_dot - e_dot. Returns the
    force and the advanced state; scalar in, scalar out.
    """
    scalar = np.ndim(e) == 0
    e_arr = np.atleast_1d(np.asarray(e, dtype=float))
    dim = e_arr.shape[0]
    r_dot_arr = np.atleast_1d(np.asarray(r_dot, dtype=float))
    if r_dot_arr.shape != (dim,):
        raise DimensionMismatch("e and r_dot must share one dimension")
    w, new_state = pid_sample_linear(gains, e_arr, state, e_dot, dt, i_max=i_max)
    y_dot = r_dot_arr - np.atleast_1d(np.asarray(e_dot, dtype=float))
    u = force_from_virtual_raw(y_dot, w, consts, tol)
    if scalar:
        new_state = PidState(integral=float(new_state.integral[0]),
                             prev_error=float(new_state.prev_error[0]))
        return float(u[0]), new_state
    return u, new_state


def relativistic_pid_step(e, state: PidState, gains: PidGains, e_dot, dt: float,
                          consts: PhysConsts, tol: Tolerances = DEFAULT_TOL, *,
                          i_max: float | None = None):
    """Sampled PID update for a constant reference (y_dot = -e_dot)."""
    zero_rate = np.zeros(np.atleast_1d(np.asarray(e, dtype=float)).shape[0])
    return pid_nonconstant_ref_step(e, state, gains, e_dot, zero_rate, dt, consts,
                                    tol, i_max=i_max)
