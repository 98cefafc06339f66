"""Constants, tolerances, state container, and the kinematic helpers."""

import math

import numpy as np
import pytest

from relkit.core import (DEFAULT_TOL, PhysConsts, SI_SPEED_OF_LIGHT, StateVec,
                         Tolerances, bracket_pow, check_speed, kinetic_energy,
                         lorentz_gamma, speed_of)
from relkit.errors import DimensionMismatch, SpeedBoundViolation

NAT = PhysConsts.natural()


def test_consts_presets():
    assert NAT.c == 1.0 and NAT.m0 == 1.0
    si = PhysConsts.si(m0=2.5)
    assert si.c == SI_SPEED_OF_LIGHT
    assert si.m0 == 2.5


def test_consts_validation():
    with pytest.raises(ValueError):
        PhysConsts(c=0.0, m0=1.0)
    with pytest.raises(ValueError):
        PhysConsts(c=1.0, m0=-1.0)
    with pytest.raises(ValueError):
        Tolerances(eps_v=0.0)
    with pytest.raises(ValueError):
        Tolerances(eps_num=1.0)


def test_statevec_shapes_and_speed():
    x1 = StateVec(p=1.0, v=0.5)
    assert x1.dim == 1
    assert x1.speed == 0.5
    x3 = StateVec(p=[1.0, 2.0, 3.0], v=[0.3, 0.0, 0.4])
    assert x3.dim == 3
    assert abs(x3.speed - 0.5) < 1e-15
    back = StateVec.from_array(x3.as_array())
    assert np.array_equal(back.p, x3.p) and np.array_equal(back.v, x3.v)


def test_statevec_rejects_bad_input():
    with pytest.raises(DimensionMismatch):
        StateVec(p=[1.0, 2.0], v=[0.0, 0.0])
    with pytest.raises(DimensionMismatch):
        StateVec(p=[1.0, 2.0, 3.0], v=0.0)
    with pytest.raises(ValueError):
        StateVec(p=math.nan, v=0.0)
    x = StateVec(p=0.0, v=0.0)
    with pytest.raises(ValueError):
        x.p[0] = 2.0


def test_gamma_known_values():
    assert lorentz_gamma(0.0, NAT) == 1.0
    assert abs(lorentz_gamma(0.6, NAT) - 1.25) < 1e-15
    assert abs(lorentz_gamma(0.8, NAT) - 5.0 / 3.0) < 1e-15
    # direction does not matter, only the magnitude
    assert abs(lorentz_gamma([0.0, -0.6, 0.0], NAT) - 1.25) < 1e-15


def test_gamma_grows_near_the_bound():
    assert lorentz_gamma(1.0 - 1e-6, NAT) > 700.0
    assert lorentz_gamma(1.0 - 1e-10, NAT) > 7e4


def test_speed_guard_raises_at_and_beyond_margin():
    # default margin is eps_v = 1e-12: anything at or above c*(1 - eps_v) is out
    assert check_speed(1.0 - 1e-11, NAT) == 1.0 - 1e-11
    for bad in (1.0 - 1e-13, 1.0, 1.5, math.inf):
        with pytest.raises(SpeedBoundViolation):
            check_speed(bad, NAT)
    with pytest.raises(SpeedBoundViolation):
        lorentz_gamma(math.nan, NAT)


def test_speed_guard_carries_context():
    try:
        check_speed(2.0, NAT)
    except SpeedBoundViolation as exc:
        assert exc.speed == 2.0
        assert exc.c == 1.0
    else:
        raise AssertionError("guard did not trip")


def test_speed_guard_margin_is_configurable():
    loose = Tolerances(eps_v=1e-6)
    with pytest.raises(SpeedBoundViolation):
        check_speed(1.0 - 1e-7, NAT, loose)
    tight = Tolerances(eps_v=1e-15)
    assert check_speed(1.0 - 1e-14, NAT, tight) == 1.0 - 1e-14


def test_bracket_pow_known_values():
    # (1 - 0.36)^(3/2) = 0.8^3 and its reciprocal
    assert abs(bracket_pow(0.6, NAT, 1.5) - 0.512) < 1e-15
    assert abs(bracket_pow(0.6, NAT, -1.5) - 1.953125) < 1e-12
    assert bracket_pow(0.0, NAT, -1.5) == 1.0
    assert abs(bracket_pow([0.6, 0.0, 0.0], NAT, 0.5) - 0.8) < 1e-15


def test_bracket_pow_exponents_compose():
    rng = np.random.default_rng(42)
    for _ in range(200):
        v = rng.uniform(-0.95, 0.95)
        e1, e2 = rng.uniform(-2.0, 2.0, size=2)
        lhs = bracket_pow(v, NAT, e1) * bracket_pow(v, NAT, e2)
        rhs = bracket_pow(v, NAT, e1 + e2)
        assert abs(lhs - rhs) < 1e-12 * (1.0 + abs(rhs)), f"v={v} e1={e1} e2={e2}"


def test_gamma_and_bracket_are_consistent():
    rng = np.random.default_rng(7)
    for _ in range(200):
        v = rng.uniform(-0.99, 0.99)
        g = lorentz_gamma(v, NAT)
        assert abs(g * bracket_pow(v, NAT, 0.5) - 1.0) < 1e-13
        assert abs(g ** 3 - bracket_pow(v, NAT, -1.5)) < 1e-12 * g ** 3


def test_kinetic_energy_values():
    assert kinetic_energy(0.0, NAT) == 0.0
    assert abs(kinetic_energy(0.6, NAT) - 0.25) < 1e-15
    heavy = PhysConsts.natural(m0=2.0)
    assert abs(kinetic_energy(0.8, heavy) - 4.0 / 3.0) < 1e-14
    si = PhysConsts.si(m0=1.0)
    # low speed limit: (gamma - 1) m0 c^2 ~ m0 v^2 / 2
    v = 3.0e4
    assert abs(kinetic_energy(v, si) / (0.5 * v ** 2) - 1.0) < 1e-6


def test_kinetic_energy_monotone_in_speed():
    speeds = np.linspace(0.0, 0.99, 200)
    kes = [kinetic_energy(s, NAT) for s in speeds]
    assert all(b > a for a, b in zip(kes, kes[1:]))


def test_speed_of_matches_norm():
    rng = np.random.default_rng(3)
    for _ in range(50):
        v = rng.normal(size=3)
        assert abs(speed_of(v) - np.linalg.norm(v)) < 1e-15
