"""Integrators, recorded trajectories, aborts, and the energy audit."""

import numpy as np
import pytest

from relkit.control import (PidGains, PidLaw, Reference, StateFeedbackGain,
                            StateFeedbackLaw)
from relkit.core import PhysConsts, StateVec, Tolerances
from relkit.dynamics import NEWTONIAN, RELATIVISTIC, PlantModel
from relkit.errors import (NonFiniteState, SpeedBoundViolation,
                           StepCountExceeded)
from relkit.sim import (IntegratorCfg, RK4, RK45, Trajectory, energy_audit,
                        integrate_closed_loop, integrate_open_loop,
                        integrate_virtual_schedule)

NAT = PhysConsts.natural()


def rel_plant(dim=1, m0=1.0, tol=None):
    consts = PhysConsts.natural(m0=m0)
    if tol is None:
        return PlantModel(consts=consts, dim=dim, flavor=RELATIVISTIC)
    return PlantModel(consts=consts, dim=dim, flavor=RELATIVISTIC, tol=tol)


def newt_plant(dim=1, m0=1.0):
    return PlantModel(consts=PhysConsts.natural(m0=m0), dim=dim, flavor=NEWTONIAN)


def exact_v(t, f=1.0):
    # constant unit-mass force from rest: v(t) = ft / sqrt(1 + (ft)^2)
    return f * t / np.sqrt(1.0 + (f * t) ** 2)


def exact_p(t, f=1.0):
    return (np.sqrt(1.0 + (f * t) ** 2) - 1.0) / f


# ------------------------------------------------------------------ open loop

def test_zero_force_coasts():
    cfg = IntegratorCfg(method=RK4, dt=0.01, t_end=2.0)
    traj = integrate_open_loop(rel_plant(), 0.0, cfg, StateVec(p=1.0, v=0.3))
    assert np.max(np.abs(traj.v - 0.3)) < 1e-14
    assert np.max(np.abs(traj.p[:, 0] - (1.0 + 0.3 * traj.t))) < 1e-12
    assert np.max(np.abs(traj.w)) < 1e-14


def test_newtonian_unit_force():
    cfg = IntegratorCfg(method=RK4, dt=0.01, t_end=2.0)
    traj = integrate_open_loop(newt_plant(), 1.0, cfg, StateVec(p=0.0, v=0.0))
    assert abs(traj.t[-1] - 2.0) < 1e-12
    assert abs(traj.p[-1, 0] - 2.0) < 1e-12
    assert abs(traj.v[-1, 0] - 2.0) < 1e-12


def test_constant_force_matches_closed_form():
    cfg = IntegratorCfg(method=RK4, dt=1e-3, t_end=5.0)
    traj = integrate_open_loop(rel_plant(), 1.0, cfg, StateVec(p=0.0, v=0.0))
    assert np.max(np.abs(traj.v[:, 0] - exact_v(traj.t))) < 1e-12
    assert np.max(np.abs(traj.p[:, 0] - exact_p(traj.t))) < 1e-12
    assert abs(traj.v[-1, 0] - exact_v(5.0)) < 1e-12


def test_rk4_error_drops_sixteenfold_per_halving():
    errors = []
    for dt in (2e-2, 1e-2):
        cfg = IntegratorCfg(method=RK4, dt=dt, t_end=2.0)
        traj = integrate_open_loop(rel_plant(), 1.0, cfg, StateVec(p=0.0, v=0.0))
        errors.append(np.max(np.abs(traj.v[:, 0] - exact_v(traj.t))))
    ratio = errors[0] / errors[1]
    assert 10.0 < ratio < 25.0, f"expected ~16x, got {ratio}"


def test_rk45_matches_closed_form():
    cfg = IntegratorCfg(method=RK45, dt=0.1, t_end=5.0, rel_tol=1e-10, abs_tol=1e-12)
    traj = integrate_open_loop(rel_plant(), 1.0, cfg, StateVec(p=0.0, v=0.0))
    assert np.max(np.abs(traj.v[:, 0] - exact_v(traj.t))) < 1e-8
    assert abs(traj.t[-1] - 5.0) < 1e-12
    assert np.all(np.diff(traj.t) > 0.0)
    # adaptive run should need far fewer samples than the fixed grid
    assert len(traj) < 500


def test_open_loop_callable_schedule():
    cfg = IntegratorCfg(method=RK4, dt=1e-3, t_end=2.0)
    traj = integrate_open_loop(rel_plant(), lambda t: 1.0 if t < 1.0 else -1.0,
                               cfg, StateVec(p=0.0, v=0.0))
    # before the flip every stage sees the same force, so rk4 stays sharp
    first_leg = slice(0, 900)
    assert np.max(np.abs(traj.v[first_leg, 0] - exact_v(traj.t[first_leg]))) < 1e-10
    # the step straddling t=1 mixes both signs in its stages, so afterwards
    # only the coarse push-pull symmetry survives
    assert abs(traj.v[-1, 0]) < 1e-3


def test_3d_transverse_kick():
    cfg = IntegratorCfg(method=RK4, dt=1e-4, t_end=0.01)
    x0 = StateVec(p=[0.0, 0.0, 0.0], v=[0.6, 0.0, 0.0])
    traj = integrate_open_loop(rel_plant(dim=3), [0.0, 1.0, 0.0], cfg, x0)
    # recorded virtual input is the realized acceleration: 0.8 on the y axis
    assert np.max(np.abs(traj.w[0] - np.array([0.0, 0.8, 0.0]))) < 1e-12
    rate = traj.v[1, 1] / (traj.t[1] - traj.t[0])
    assert abs(rate - 0.8) < 1e-3


def test_gamma_and_energy_columns():
    cfg = IntegratorCfg(method=RK4, dt=1e-3, t_end=2.0)
    traj = integrate_open_loop(rel_plant(), 1.0, cfg, StateVec(p=0.0, v=0.0))
    g = 1.0 / np.sqrt(1.0 - traj.v[:, 0] ** 2)
    assert np.max(np.abs(traj.gamma - g)) < 1e-12
    assert np.max(np.abs(traj.energy - (g - 1.0))) < 1e-12
    assert np.all(np.diff(traj.gamma) > 0.0)


# ---------------------------------------------------------------- closed loop

def sf_law(k0=2.0, k1=3.0, wrapped=True):
    return StateFeedbackLaw(gain=StateFeedbackGain(K=np.array([[k0, k1]])), wrapped=wrapped)


def test_closed_loop_regulates_to_reference():
    cfg = IntegratorCfg(method=RK4, dt=1e-3, t_end=10.0)
    ref = Reference.const(0.0, 1)
    traj = integrate_closed_loop(rel_plant(), sf_law(), ref, cfg, StateVec(p=1.0, v=0.0))
    assert abs(traj.p[-1, 0]) < 1e-3
    assert abs(traj.v[-1, 0]) < 1e-3
    assert np.max(np.abs(traj.e - (0.0 - traj.p))) < 1e-15


def test_w_column_records_the_virtual_input():
    cfg = IntegratorCfg(method=RK4, dt=1e-2, t_end=1.0)
    ref = Reference.const(0.0, 1)
    traj = integrate_closed_loop(rel_plant(), sf_law(), ref, cfg, StateVec(p=1.0, v=0.2))
    want = -(2.0 * traj.p[:, 0] + 3.0 * traj.v[:, 0])
    assert np.max(np.abs(traj.w[:, 0] - want)) < 1e-10


def test_wrapped_loop_equals_newtonian_loop_on_the_same_grid():
    # exact linearization at trajectory level, for a few random stable gains
    rng = np.random.default_rng(41)
    cfg = IntegratorCfg(method=RK4, dt=1e-3, t_end=5.0)
    ref = Reference.const(0.0, 1)
    for _ in range(3):
        k0, k1 = rng.uniform(0.5, 4.0, size=2)
        x0 = StateVec(p=1.0, v=rng.uniform(-0.5, 0.5))
        wrapped = integrate_closed_loop(rel_plant(), sf_law(k0, k1), ref, cfg, x0)
        linear = integrate_closed_loop(newt_plant(), sf_law(k0, k1, wrapped=False),
                                       ref, cfg, x0)
        gap = max(np.max(np.abs(wrapped.p - linear.p)),
                  np.max(np.abs(wrapped.v - linear.v)))
        assert gap < 1e-9, f"gains=({k0},{k1}) gap={gap}"


def test_determinism_bitwise():
    cfg = IntegratorCfg(method=RK45, dt=0.1, t_end=3.0, rel_tol=1e-8, abs_tol=1e-10)
    ref = Reference.const(0.5, 1)
    runs = [integrate_closed_loop(rel_plant(), sf_law(), ref, cfg, StateVec(p=1.0, v=0.1))
            for _ in range(2)]
    assert np.array_equal(runs[0].t, runs[1].t)
    assert np.array_equal(runs[0].p, runs[1].p)
    assert np.array_equal(runs[0].v, runs[1].v)
    assert np.array_equal(runs[0].u, runs[1].u)


def test_pid_closed_loop_tracks_step():
    cfg = IntegratorCfg(method=RK45, dt=0.1, t_end=50.0, rel_tol=1e-8, abs_tol=1e-10,
                        dt_max=0.5)
    law = PidLaw(gains=PidGains(kp=4.0, ki=1.0, kd=3.0))
    ref = Reference.const(1.0, 1)
    traj = integrate_closed_loop(rel_plant(), law, ref, cfg, StateVec(p=0.0, v=0.0))
    assert abs(traj.e[-1, 0]) < 1e-5
    assert np.max(np.abs(traj.v)) < 1.0


def test_pid_integral_clamp_changes_the_run():
    cfg = IntegratorCfg(method=RK4, dt=5e-3, t_end=6.0)
    ref = Reference.const(1.0, 1)
    gains = PidGains(kp=4.0, ki=1.0, kd=3.0)
    free = integrate_closed_loop(rel_plant(), PidLaw(gains=gains), ref, cfg,
                                 StateVec(p=0.0, v=0.0))
    clamped = integrate_closed_loop(rel_plant(), PidLaw(gains=gains, i_max=0.1),
                                    ref, cfg, StateVec(p=0.0, v=0.0))
    assert np.all(np.isfinite(clamped.p))
    assert np.max(np.abs(free.p - clamped.p)) > 1e-3


def test_step_schedule_reference():
    # the pid law is the tracker; the state feedback law ignores references
    cfg = IntegratorCfg(method=RK4, dt=1e-3, t_end=16.0)
    ref = Reference.steps([(0.0, 0.4), (8.0, -0.4)], 1)
    law = PidLaw(gains=PidGains(kp=4.0, ki=1.0, kd=3.0))
    traj = integrate_closed_loop(rel_plant(), law, ref, cfg, StateVec(p=0.0, v=0.0))
    r_t = np.where(traj.t < 8.0, 0.4, -0.4)
    assert np.max(np.abs(traj.e[:, 0] - (r_t - traj.p[:, 0]))) == 0.0
    near_8 = np.searchsorted(traj.t, 8.0) - 1
    assert abs(traj.p[near_8, 0] - 0.4) < 0.1
    assert abs(traj.p[-1, 0] + 0.4) < 0.15


# --------------------------------------------------------------- sampled mode

def test_zoh_must_divide_the_grid():
    with pytest.raises(ValueError):
        IntegratorCfg(method=RK4, dt=1e-3, t_end=1.0, zoh_dt=2.5e-3)
    cfg = IntegratorCfg(method=RK4, dt=1e-3, t_end=1.0, zoh_dt=2e-3)
    assert cfg.zoh_dt == 2e-3


def test_zoh_holds_the_force_between_samples():
    cfg = IntegratorCfg(method=RK4, dt=1e-3, t_end=1.0, zoh_dt=1e-2)
    ref = Reference.const(0.0, 1)
    traj = integrate_closed_loop(rel_plant(), sf_law(), ref, cfg, StateVec(p=1.0, v=0.0))
    u = traj.u[:, 0]
    holds = 0
    for k in range(1, len(traj) - 1):
        frac = (traj.t[k] / 1e-2) % 1.0
        if min(frac, 1.0 - frac) < 1e-6:
            continue  # a fresh sample lands here
        assert u[k] == u[k - 1] or u[k] == u[k + 1]
        holds += u[k] == u[k - 1]
    assert holds > 800


def test_sampled_pid_still_converges():
    cfg = IntegratorCfg(method=RK4, dt=1e-3, t_end=30.0, zoh_dt=5e-2)
    law = PidLaw(gains=PidGains(kp=4.0, ki=1.0, kd=3.0))
    ref = Reference.const(1.0, 1)
    traj = integrate_closed_loop(rel_plant(), law, ref, cfg, StateVec(p=0.0, v=0.0))
    assert abs(traj.e[-1, 0]) < 1e-2


# --------------------------------------------------------------------- aborts

def test_speed_guard_aborts_with_partial_trajectory():
    cfg = IntegratorCfg(method=RK4, dt=2.0, t_end=10.0)
    with pytest.raises(SpeedBoundViolation) as info:
        integrate_open_loop(rel_plant(), 100.0, cfg, StateVec(p=0.0, v=0.0))
    partial = info.value.partial
    assert len(partial) >= 1
    assert partial.t[0] == 0.0
    assert np.all(np.abs(partial.v) < 1.0)


def test_rk45_cannot_cross_the_bound():
    # the closed form crosses the guard margin near t ~ 7.1e3; the adaptive
    # run must abort (guarded step collapse or budget), never sample |v| >= c
    cfg = IntegratorCfg(method=RK45, dt=1.0, t_end=1e6, rel_tol=1e-8,
                        abs_tol=1e-10, max_steps=20000)
    with pytest.raises((SpeedBoundViolation, StepCountExceeded)) as info:
        integrate_open_loop(rel_plant(), 100.0, cfg, StateVec(p=0.0, v=0.0))
    partial = info.value.partial
    assert len(partial) >= 2
    assert np.all(np.abs(partial.v) < 1.0)
    assert np.all(np.diff(partial.t) > 0.0)


def test_fast_initial_state_is_rejected_outright():
    cfg = IntegratorCfg(method=RK4, dt=1e-3, t_end=1.0)
    with pytest.raises(SpeedBoundViolation):
        integrate_open_loop(rel_plant(), 0.0, cfg, StateVec(p=0.0, v=1.0 - 1e-13))


def test_step_budget_is_checked_up_front_for_rk4():
    cfg = IntegratorCfg(method=RK4, dt=1e-3, t_end=1.0, max_steps=10)
    with pytest.raises(StepCountExceeded) as info:
        integrate_open_loop(rel_plant(), 1.0, cfg, StateVec(p=0.0, v=0.0))
    assert len(info.value.partial) == 1


def test_divergent_loop_raises_non_finite():
    # positive feedback on the unbounded plant overflows within a few steps
    cfg = IntegratorCfg(method=RK4, dt=0.5, t_end=50.0)
    law = StateFeedbackLaw(gain=StateFeedbackGain(K=np.array([[-1e200, 0.0]])),
                           wrapped=False)
    ref = Reference.const(0.0, 1)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(NonFiniteState) as info:
            integrate_closed_loop(newt_plant(), law, ref, cfg, StateVec(p=1.0, v=0.0))
    assert len(info.value.partial) >= 1


def test_integrator_cfg_validation():
    with pytest.raises(ValueError):
        IntegratorCfg(method="euler")
    with pytest.raises(ValueError):
        IntegratorCfg(dt=0.0)
    with pytest.raises(ValueError):
        IntegratorCfg(t_end=-1.0)
    with pytest.raises(ValueError):
        IntegratorCfg(rel_tol=0.0)
    with pytest.raises(ValueError):
        IntegratorCfg(max_steps=0)
    with pytest.raises(ValueError):
        IntegratorCfg(dt_max=0.0)


# ----------------------------------------------------------- virtual schedule

def test_virtual_schedule_is_exactly_linear():
    # constant w drives the speed-limited plant along straight double
    # integrator arcs: v = w t, p = w t^2 / 2
    cfg = IntegratorCfg(method=RK4, dt=1e-3, t_end=2.0)
    traj = integrate_virtual_schedule(rel_plant(), lambda t: 0.3, cfg,
                                      StateVec(p=0.0, v=0.0))
    assert np.max(np.abs(traj.v[:, 0] - 0.3 * traj.t)) < 1e-12
    assert np.max(np.abs(traj.p[:, 0] - 0.15 * traj.t ** 2)) < 1e-12
    assert abs(traj.v[-1, 0] - 0.6) < 1e-12


def test_virtual_schedule_newtonian_variant():
    cfg = IntegratorCfg(method=RK4, dt=1e-3, t_end=2.0)
    traj = integrate_virtual_schedule(newt_plant(m0=2.0), lambda t: 0.3, cfg,
                                      StateVec(p=0.0, v=0.0))
    # dim 1: w carries force units, so the acceleration is w / m0
    assert abs(traj.v[-1, 0] - 0.3) < 1e-12


# --------------------------------------------------------------- energy audit

def test_energy_audit_zero_force():
    cfg = IntegratorCfg(method=RK4, dt=1e-2, t_end=1.0)
    traj = integrate_open_loop(rel_plant(), 0.0, cfg, StateVec(p=0.0, v=0.4))
    assert energy_audit(traj) == 0.0


def test_energy_audit_constant_force():
    cfg = IntegratorCfg(method=RK4, dt=1e-3, t_end=1.0)
    traj = integrate_open_loop(rel_plant(), 1.0, cfg, StateVec(p=0.0, v=0.0))
    assert energy_audit(traj) < 1e-6


def test_energy_audit_needs_two_samples():
    one = Trajectory(dim=1, t=np.zeros(1), p=np.zeros((1, 1)), v=np.zeros((1, 1)),
                     u=np.zeros((1, 1)), w=np.zeros((1, 1)), gamma=np.ones(1),
                     energy=np.zeros(1), e=np.zeros((1, 1)))
    with pytest.raises(ValueError):
        energy_audit(one)


def test_energy_audit_halving_ratio():
    residuals = []
    for dt in (2e-2, 1e-2, 5e-3):
        cfg = IntegratorCfg(method=RK4, dt=dt, t_end=5.0)
        traj = integrate_open_loop(rel_plant(), 1.0, cfg, StateVec(p=0.0, v=0.0))
        residuals.append(energy_audit(traj))
    for coarse, fine in zip(residuals, residuals[1:]):
        ratio = coarse / fine
        assert 11.0 < ratio < 22.0, f"residuals={residuals}"
