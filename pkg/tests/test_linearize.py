"""Exact input transforms and the linear model they produce.

The headline property lives here: pushing any virtual input through the
inverse transform and then through the nonlinear plant gives back exactly
the double-integrator right-hand side, for every admissible state.
"""

import numpy as np
import pytest

from relkit.core import PhysConsts, StateVec, lorentz_gamma
from relkit.dynamics import RELATIVISTIC, PlantModel
from relkit.errors import DimensionMismatch, SpeedBoundViolation
from relkit.linearize import (LinearPlant, linearized_model, u_from_w, u_from_w_1d,
                              u_from_w_3d, w_from_u, w_from_u_1d, w_from_u_3d)

NAT = PhysConsts.natural()


def random_state(rng, dim, vmax=0.99):
    if dim == 1:
        return StateVec(p=rng.normal(), v=rng.uniform(-vmax, vmax))
    v = rng.normal(size=3)
    v *= rng.uniform(0.0, vmax) / max(np.linalg.norm(v), 1e-300)
    return StateVec(p=rng.normal(size=3), v=v)


def test_linear_model_matrices_1d():
    m = linearized_model(1, PhysConsts.natural(m0=2.0))
    assert np.array_equal(m.A, [[0.0, 1.0], [0.0, 0.0]])
    assert np.array_equal(m.B, [[0.0], [0.5]])
    assert np.array_equal(m.C, [[1.0, 0.0]])
    assert m.dim == 1


def test_linear_model_matrices_3d():
    m = linearized_model(3, PhysConsts.natural(m0=2.0))
    assert m.A.shape == (6, 6) and m.B.shape == (6, 3) and m.C.shape == (3, 6)
    assert np.array_equal(m.A[:3, 3:], np.eye(3))
    assert np.count_nonzero(m.A) == 3
    # virtual input is an acceleration here, so B is the raw identity block
    assert np.array_equal(m.B[3:, :], np.eye(3))
    assert np.count_nonzero(m.B[:3, :]) == 0
    assert m.dim == 3


def test_linear_model_structure():
    for dim in (1, 3):
        m = linearized_model(dim, NAT)
        assert np.count_nonzero(m.A @ m.A) == 0  # nilpotent drift
        assert np.count_nonzero(m.C @ m.B) == 0  # relative degree two
        with pytest.raises(ValueError):
            m.A[0, 0] = 1.0


def test_linear_plant_validates_shapes():
    with pytest.raises(DimensionMismatch):
        LinearPlant(A=np.zeros((2, 3)), B=np.zeros((2, 1)), C=np.zeros((1, 2)))


def test_scalar_transform_known_values():
    at_rest = StateVec(p=0.0, v=0.0)
    assert w_from_u_1d(at_rest, 2.0, NAT) == 2.0
    assert u_from_w_1d(at_rest, 2.0, NAT) == 2.0
    moving = StateVec(p=0.0, v=0.6)
    assert abs(w_from_u_1d(moving, 1.0, NAT) - 0.512) < 1e-12
    assert abs(u_from_w_1d(moving, 1.0, NAT) - 1.953125) < 1e-12


def test_transforms_round_trip():
    rng = np.random.default_rng(101)
    for dim in (1, 3):
        for _ in range(300):
            x = random_state(rng, dim)
            u = rng.normal(size=dim) * 10.0
            w = rng.normal(size=dim) * 10.0
            u_back = u_from_w(x, w_from_u(x, u, NAT), NAT)
            w_back = w_from_u(x, u_from_w(x, w, NAT), NAT)
            assert np.max(np.abs(u_back - u)) < 1e-9 * (1.0 + np.max(np.abs(u)))
            assert np.max(np.abs(w_back - w)) < 1e-9 * (1.0 + np.max(np.abs(w)))


def test_inverse_transform_linearizes_the_plant():
    rng = np.random.default_rng(103)
    for dim in (1, 3):
        plant = PlantModel(consts=PhysConsts.natural(m0=1.7), dim=dim,
                           flavor=RELATIVISTIC)
        for _ in range(200):
            x = random_state(rng, dim)
            w = rng.normal(size=dim) * 5.0
            u = u_from_w(x, w, plant.consts)
            out = plant.rhs(x, u)
            want_vdot = w / plant.consts.m0 if dim == 1 else w
            assert np.max(np.abs(out[:dim] - x.v)) < 1e-12
            assert np.max(np.abs(out[dim:] - want_vdot)) < 1e-9 * (1.0 + np.max(np.abs(want_vdot)))


def test_3d_transform_effective_masses():
    rng = np.random.default_rng(107)
    for _ in range(100):
        x = random_state(rng, 3, vmax=0.95)
        if x.speed < 1e-3:
            continue
        g = lorentz_gamma(x.v, NAT)
        vhat = x.v / np.linalg.norm(x.v)
        w_par = rng.normal() * vhat
        u_par = u_from_w_3d(x, w_par, NAT)
        assert np.max(np.abs(u_par - g ** 3 * w_par)) < 1e-9 * (1.0 + np.max(np.abs(u_par)))
        raw = rng.normal(size=3)
        w_perp = raw - (raw @ vhat) * vhat
        u_perp = u_from_w_3d(x, w_perp, NAT)
        assert np.max(np.abs(u_perp - g * w_perp)) < 1e-9 * (1.0 + np.max(np.abs(u_perp)))


def test_transform_is_smooth_in_v():
    # central difference of w(u; v) in v shrinks linearly with the probe size
    x_of = lambda v: StateVec(p=0.0, v=v)
    deltas = []
    for h in (1e-4, 5e-5):
        hi = w_from_u_1d(x_of(0.9 + h), 1.0, NAT)
        lo = w_from_u_1d(x_of(0.9 - h), 1.0, NAT)
        deltas.append(hi - lo)
    ratio = deltas[0] / deltas[1]
    assert 1.9 < ratio < 2.1, f"ratio={ratio}"


def test_transforms_reject_dim_mismatch_and_overspeed():
    x3 = StateVec(p=[0.0, 0.0, 0.0], v=[0.0, 0.0, 0.0])
    with pytest.raises(DimensionMismatch):
        u_from_w(x3, np.array([1.0]), NAT)
    with pytest.raises(DimensionMismatch):
        w_from_u_1d(x3, 1.0, NAT)
    fast = StateVec(p=0.0, v=1.0 - 1e-14)
    with pytest.raises(SpeedBoundViolation):
        u_from_w_1d(fast, 1.0, NAT)


def test_scalar_and_vector_paths_agree():
    x = StateVec(p=0.0, v=0.37)
    u = 2.25
    w_scalar = w_from_u_1d(x, u, NAT)
    w_vec = w_from_u(x, np.array([u]), NAT)
    assert w_vec.shape == (1,)
    assert abs(w_scalar - w_vec[0]) == 0.0
    aligned = StateVec(p=[0.0, 0.0, 0.0], v=[0.37, 0.0, 0.0])
    w_three = w_from_u_3d(aligned, [u, 0.0, 0.0], NAT)
    # the 3D virtual input is an acceleration, the 1D one is a force
    assert abs(w_three[0] - w_scalar / NAT.m0) < 1e-15
