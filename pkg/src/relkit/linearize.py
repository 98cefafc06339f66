"""Exact input transforms between the physical force and a virtual input.

Substituting u = force_from_virtual(x, w) into the speed-limited plant turns
the closed loop into a plain double integrator in w, exactly, not to first
order. Controllers are designed against that linear model and then wrapped
through the inverse transform.

Unit convention, deliberate and worth noting: the scalar transform keeps w
in force units (the damping factor multiplies the force), so the linear
model's input matrix carries 1/m0. The vector transform maps the force to
the acceleration it actually produces, so there w is an acceleration and the
input matrix is an identity block. The two conventions are not harmonized;
mixing them up produces an m0-scaled loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DEFAULT_TOL, PhysConsts, StateVec, Tolerances, bracket_pow, check_speed, lorentz_gamma
from .errors import DimensionMismatch


def virtual_from_force_raw(v: np.ndarray, u: np.ndarray, consts: PhysConsts,
                           tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Raw-array forward transform; shared by the public ops and the simulator."""
    if v.shape[0] == 1:
        return bracket_pow(v, consts, 1.5, tol) * u
    speed = check_speed(v, consts, tol)
    root = bracket_pow(speed, consts, 0.5, tol)
    return (root / consts.m0) * (u - (float(v @ u) / consts.c ** 2) * v)


def force_from_virtual_raw(v: np.ndarray, w: np.ndarray, consts: PhysConsts,
                           tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Raw-array inverse transform; shared by the public ops and the simulator."""
    if v.shape[0] == 1:
        return bracket_pow(v, consts, -1.5, tol) * w
    gamma = lorentz_gamma(v, consts, tol)
    return consts.m0 * gamma ** 3 * (float(v @ w) / consts.c ** 2) * v + consts.m0 * gamma * w


def w_from_u_1d(x: StateVec, u: float, consts: PhysConsts,
                tol: Tolerances = DEFAULT_TOL) -> float:
    """w = (1 - v^2/c^2)^(3/2) u. Force units; w/m0 is the resulting acceleration."""
    if x.dim != 1:
        raise DimensionMismatch(f"w_from_u_1d needs a one-dimensional state, got dim {x.dim}")
    return float(virtual_from_force_raw(x.v, np.atleast_1d(np.asarray(u, dtype=float)), consts, tol)[0])


def u_from_w_1d(x: StateVec, w: float, consts: PhysConsts,
                tol: Tolerances = DEFAULT_TOL) -> float:
    """u = (1 - v^2/c^2)^(-3/2) w, the inverse of w_from_u_1d at the same state."""
    if x.dim != 1:
        raise DimensionMismatch(f"u_from_w_1d needs a one-dimensional state, got dim {x.dim}")
    return float(force_from_virtual_raw(x.v, np.atleast_1d(np.asarray(w, dtype=float)), consts, tol)[0])


def w_from_u_3d(x: StateVec, u, consts: PhysConsts,
                tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """w = sqrt(1 - |v|^2/c^2)/m0 * (u - (v.u) v / c^2).

    Acceleration units: this is exactly dv/dt under force u.
    """
    if x.dim != 3:
        raise DimensionMismatch(f"w_from_u_3d needs a three-dimensional state, got dim {x.dim}")
    return virtual_from_force_raw(x.v, np.asarray(u, dtype=float).reshape(3), consts, tol)


def u_from_w_3d(x: StateVec, w, consts: PhysConsts,
                tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """u = m0 gamma^3 (v.w) v / c^2 + m0 gamma w, the inverse of w_from_u_3d."""
    if x.dim != 3:
        raise DimensionMismatch(f"u_from_w_3d needs a three-dimensional state, got dim {x.dim}")
    return force_from_virtual_raw(x.v, np.asarray(w, dtype=float).reshape(3), consts, tol)


def w_from_u(x: StateVec, u, consts: PhysConsts, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Dimension-dispatching forward transform; returns an array of shape (dim,)."""
    arr = np.atleast_1d(np.asarray(u, dtype=float))
    if arr.shape != (x.dim,):
        raise DimensionMismatch(f"force must have dimension {x.dim}, got shape {arr.shape}")
    return virtual_from_force_raw(x.v, arr, consts, tol)


def u_from_w(x: StateVec, w, consts: PhysConsts, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Dimension-dispatching inverse transform; returns an array of shape (dim,)."""
    arr = np.atleast_1d(np.asarray(w, dtype=float))
    if arr.shape != (x.dim,):
        raise DimensionMismatch(f"virtual input must have dimension {x.dim}, got shape {arr.shape}")
    return force_from_virtual_raw(x.v, arr, consts, tol)


@dataclass(frozen=True)
class LinearPlant:
    """Double-integrator model (A, B, C) that the transforms expose.

    A is nilpotent of index 2 and C @ B == 0 (position output, input enters
    the velocity block).
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "C"):
            arr = np.asarray(getattr(self, name), dtype=float).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape[0] != n or self.C.shape[1] != n:
            raise DimensionMismatch(
                f"inconsistent system shapes A{self.A.shape} B{self.B.shape} C{self.C.shape}")

    @property
    def dim(self) -> int:
        return self.B.shape[1]


def linearized_model(dim: int, consts: PhysConsts) -> LinearPlant:
    """The linear model seen through the transforms.

    dim = 1: A = [[0,1],[0,0]], B = [0, 1/m0]^T, C = [1, 0]
        (w carries force units, hence the 1/m0).
    dim = 3: block form with identity input matrix, w already being an
        acceleration.
    """
    if dim == 1:
        a = np.array([[0.0, 1.0], [0.0, 0.0]])
        b = np.array([[0.0], [1.0 / consts.m0]])
        c = np.array([[1.0, 0.0]])
    elif dim == 3:
        eye = np.eye(3)
        zero = np.zeros((3, 3))
        a = np.block([[zero, eye], [zero, zero]])
        b = np.vstack((zero, eye))
        c = np.hstack((eye, zero))
    else:
        raise DimensionMismatch(f"linearized_model supports dim 1 or 3, got {dim}")
    return LinearPlant(A=a, B=b, C=c)
