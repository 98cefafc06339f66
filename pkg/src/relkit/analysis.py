"""Minimum-energy steering on the linear model and regime-comparison studies.

Steering solves the double-integrator reachability problem in closed form
(the controllability Gramian of the A, B pair has a polynomial-in-T inverse),
then realizes the plan on the speed-limited plant by wrapping the virtual
input schedule through the inverse transform. Plans whose predicted peak
speed comes too close to c are re-solved on a doubled horizon, which lowers
the required accelerations, before anything is simulated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .control import Reference, StateFeedbackGain, StateFeedbackLaw
from .core import DEFAULT_TOL, PhysConsts, StateVec, Tolerances, check_speed
from .dynamics import NEWTONIAN, RELATIVISTIC, PlantModel
from .errors import DimensionMismatch, HorizonExhausted, InvalidPoleSet
from .linearize import u_from_w
from .sim import IntegratorCfg, RK45, Trajectory, integrate_closed_loop, integrate_virtual_schedule

PEAK_SPEED_MARGIN = 0.95
MAX_DOUBLINGS = 20


def gramian(T: float, dim: int, consts: PhysConsts) -> np.ndarray:
    """Controllability Gramian of the linear model over [0, T], in closed form.

    The state transition is polynomial, so W(T) = integral of
    e^{As} B B^T e^{A^T s} reduces to the block matrix
    [[T^3/3, T^2/2], [T^2/2, T]] (times 1/m0^2 for dim 1, where the input
    matrix carries 1/m0; Kronecker-expanded with the identity for dim 3).
    Symmetric positive definite for every T > 0.
    """
    if not (math.isfinite(T) and T > 0.0):
        raise ValueError(f"horizon must be positive and finite, got {T}")
    base = np.array([[T ** 3 / 3.0, T ** 2 / 2.0], [T ** 2 / 2.0, T]])
    if dim == 1:
        return base / consts.m0 ** 2
    if dim == 3:
        return np.kron(base, np.eye(3))
    raise DimensionMismatch(f"gramian supports dim 1 or 3, got {dim}")


@dataclass(frozen=True)
class SteeringProblem:
    """Drive x0 to xT in the given horizon (before any doubling).

    Both endpoint speeds must respect the guard; a target at or beyond c is
    rejected here, at construction.
    """

    x0: StateVec
    xT: StateVec
    horizon: float
    consts: PhysConsts
    tol: Tolerances = DEFAULT_TOL

    def __post_init__(self):
        if self.x0.dim != self.xT.dim:
            raise DimensionMismatch(f"endpoint dimensions disagree: {self.x0.dim} vs {self.xT.dim}")
        if not (math.isfinite(self.horizon) and self.horizon > 0.0):
            raise ValueError(f"horizon must be positive and finite, got {self.horizon}")
        check_speed(self.x0.v, self.consts, self.tol)
        check_speed(self.xT.v, self.consts, self.tol)


@dataclass(frozen=True)
class SteeringSolution:
    """A realized minimum-energy plan.

    w_of_t is the designed virtual-input schedule on [0, horizon] (the
    possibly doubled horizon); u_at wraps it at an actual state. The
    trajectory is the closed-loop realization on the plant, with
    endpoint_error = ||x(T) - xT||_inf / (1 + ||xT||_inf).
    """

    problem: SteeringProblem
    horizon: float
    doublings: int
    w_of_t: Callable
    u_at: Callable
    predicted_peak_speed: float
    trajectory: Trajectory
    endpoint_error: float
    realized_peak_speed: float


def _solve_schedule(prob: SteeringProblem, T: float):
    """Closed-form minimum-energy schedule for horizon T on the linear model."""
    dim = prob.x0.dim
    m_eff = prob.consts.m0 if dim == 1 else 1.0
    drift = np.concatenate((prob.x0.p + T * prob.x0.v, prob.x0.v))
    delta = prob.xT.as_array() - drift
    eta = np.linalg.solve(gramian(T, dim, prob.consts), delta)
    eta_p, eta_v = eta[:dim], eta[dim:]

    def w_of_t(t: float) -> np.ndarray:
        return ((T - t) * eta_p + eta_v) / m_eff

    def v_lin(t: np.ndarray) -> np.ndarray:
        # velocity of the linear model under the schedule, vectorized over t
        coef = (T * t - 0.5 * t ** 2) / m_eff ** 2
        return prob.x0.v[None, :] + np.outer(coef, eta_p) + np.outer(t / m_eff ** 2, eta_v)

    ts = np.linspace(0.0, T, 4097)
    peak = float(np.max(np.linalg.norm(v_lin(ts), axis=1)))
    return w_of_t, eta, peak


def min_energy_steer(prob: SteeringProblem, cfg: IntegratorCfg | None = None) -> SteeringSolution:
    """Solve, de-risk, and realize a minimum-energy transfer.

    The horizon doubles while the predicted (linear-model) peak speed reaches
    0.95 c, up to 20 doublings; past that the target is declared out of reach
    of this construction. The accepted schedule is then simulated on the
    speed-limited plant through the inverse transform.
    """
    T = prob.horizon
    doublings = 0
    while True:
        w_of_t, eta, peak = _solve_schedule(prob, T)
        if peak < PEAK_SPEED_MARGIN * prob.consts.c:
            break
        doublings += 1
        if doublings > MAX_DOUBLINGS:
            raise HorizonExhausted(
                f"predicted peak speed {peak:.6g} still reaches {PEAK_SPEED_MARGIN} c "
                f"after {MAX_DOUBLINGS} horizon doublings")
        T *= 2.0
    if cfg is None:
        cfg = IntegratorCfg(method=RK45, dt=T / 128.0, t_end=T,
                            rel_tol=1e-10, abs_tol=1e-12, dt_max=T / 64.0)
    elif cfg.t_end != T or cfg.dt_max is None:
        cfg = IntegratorCfg(method=cfg.method, dt=min(cfg.dt, T / 10.0), t_end=T,
                            rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol,
                            max_steps=cfg.max_steps, zoh_dt=cfg.zoh_dt,
                            dt_max=cfg.dt_max if cfg.dt_max is not None else T / 64.0)
    plant = PlantModel(consts=prob.consts, dim=prob.x0.dim, flavor=RELATIVISTIC, tol=prob.tol)
    traj = integrate_virtual_schedule(plant, w_of_t, cfg, prob.x0)
    target = prob.xT.as_array()
    err = float(np.max(np.abs(traj.final_state.as_array() - target)))
    endpoint_error = err / (1.0 + float(np.max(np.abs(target))))
    realized_peak = float(np.max(np.linalg.norm(traj.v, axis=1)))

    def u_at(t: float, x: StateVec) -> np.ndarray:
        return u_from_w(x, w_of_t(t), prob.consts, prob.tol)

    return SteeringSolution(problem=prob, horizon=T, doublings=doublings,
                            w_of_t=w_of_t, u_at=u_at, predicted_peak_speed=peak,
                            trajectory=traj, endpoint_error=endpoint_error,
                            realized_peak_speed=realized_peak)


@dataclass(frozen=True)
class MismatchRow:
    """One speed regime of the wrapped-vs-unwrapped comparison."""

    v_scale: float
    mismatch: float
    final_err_wrapped: float
    final_err_unwrapped: float
    settle_wrapped: float | None
    settle_unwrapped: float | None
    linfit_wrapped: float
    linfit_unwrapped: float


@dataclass(frozen=True)
class MismatchStudy:
    rows: tuple
    t_end: float
    dt: float


def _settling_time(t: np.ndarray, p: np.ndarray, v: np.ndarray, scale: float) -> float | None:
    err = np.maximum(np.max(np.abs(p), axis=1), np.max(np.abs(v), axis=1))
    thresh = 0.02 * scale
    inside = err <= thresh
    if not inside[-1]:
        return None
    # first index from which the run stays inside the band
    idx = len(inside) - 1
    while idx > 0 and inside[idx - 1]:
        idx -= 1
    return float(t[idx])


def mismatch_cell(gain, v_scale: float, consts: PhysConsts,
                  tol: Tolerances = DEFAULT_TOL, *, t_end: float = 10.0,
                  dt: float = 1e-3, p0: float = 0.0) -> MismatchRow:
    """Compare wrapped and unwrapped state feedback from one initial speed.

    Both controllers run on the speed-limited scalar plant from
    x0 = (p0, v_scale * c) on the same fixed grid; the linear reference is
    the same law on the Newtonian plant. The mismatch is
    max_t |x_unwrapped - x_wrapped|_inf / max_t |x_wrapped|_inf.
    """
    if isinstance(gain, StateFeedbackGain):
        K = gain
    else:
        K = StateFeedbackGain(np.asarray(gain, dtype=float).reshape(1, 2))
    k0, k1 = float(K.K[0, 0]), float(K.K[0, 1])
    if not (k0 > 0.0 and k1 > 0.0):
        raise InvalidPoleSet("mismatch study needs a strictly stabilizing gain (both entries positive)")
    if not 0.0 <= v_scale < 1.0:
        raise ValueError(f"v_scale must lie in [0, 1), got {v_scale}")
    x0 = StateVec(p=p0, v=v_scale * consts.c)
    cfg = IntegratorCfg(method="rk4", dt=dt, t_end=t_end)
    rel = PlantModel(consts=consts, dim=1, flavor=RELATIVISTIC, tol=tol)
    newt = PlantModel(consts=consts, dim=1, flavor=NEWTONIAN, tol=tol)
    ref = Reference.const(0.0, 1)
    runs = {}
    for name, plant, wrapped in (("wrapped", rel, True), ("unwrapped", rel, False),
                                 ("linear", newt, False)):
        law = StateFeedbackLaw(gain=K, wrapped=wrapped)
        runs[name] = integrate_closed_loop(plant, law, ref, cfg, x0)
    xs = {name: np.hstack((tr.p, tr.v)) for name, tr in runs.items()}
    denom = float(np.max(np.abs(xs["wrapped"])))
    mismatch = float(np.max(np.abs(xs["unwrapped"] - xs["wrapped"]))) / denom
    scale = max(abs(p0), abs(v_scale * consts.c), np.finfo(float).tiny)
    t = runs["wrapped"].t
    return MismatchRow(
        v_scale=v_scale,
        mismatch=mismatch,
        final_err_wrapped=float(np.max(np.abs(xs["wrapped"][-1]))),
        final_err_unwrapped=float(np.max(np.abs(xs["unwrapped"][-1]))),
        settle_wrapped=_settling_time(t, runs["wrapped"].p, runs["wrapped"].v, scale),
        settle_unwrapped=_settling_time(t, runs["unwrapped"].p, runs["unwrapped"].v, scale),
        linfit_wrapped=float(np.max(np.abs(xs["wrapped"] - xs["linear"]))),
        linfit_unwrapped=float(np.max(np.abs(xs["unwrapped"] - xs["linear"]))),
    )


def newtonian_mismatch_study(gain, v_scales, consts: PhysConsts,
                             tol: Tolerances = DEFAULT_TOL, *, t_end: float = 10.0,
                             dt: float = 1e-3, p0: float = 0.0) -> MismatchStudy:
    """Run mismatch_cell over a list of speed regimes (scalar plant).

    The regimes are processed in the given order; an empty list is an error,
    not an empty study.
    """
    scales = list(v_scales)
    if not scales:
        raise ValueError("at least one speed regime is required")
    rows = tuple(mismatch_cell(gain, s, consts, tol, t_end=t_end, dt=dt, p0=p0)
                 for s in scales)
    return MismatchStudy(rows=rows, t_end=t_end, dt=dt)
