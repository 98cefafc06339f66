"""Right-hand sides of the Newtonian and speed-limited point-mass plants.

In one dimension a force u produces the acceleration

    dv/dt = (u / m0) * (1 - v^2/c^2)^(3/2),

so the Newtonian response is damped by a factor that vanishes as |v| -> c.
In three dimensions force and acceleration are no longer collinear:

    a = sqrt(1 - |v|^2/c^2) / m0 * (F - (v . F) v / c^2).

The response along the velocity is weaker (effective mass m0 * gamma^3)
than the response transverse to it (effective mass m0 * gamma), which is
why a always stays in the plane spanned by v and F.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DEFAULT_TOL, PhysConsts, StateVec, Tolerances, bracket_pow, check_speed, lorentz_gamma
from .errors import DimensionMismatch, NonOrthogonalInput

NEWTONIAN = "newtonian"
RELATIVISTIC = "relativistic"
FLAVORS = (NEWTONIAN, RELATIVISTIC)


def as_force(u, dim: int) -> np.ndarray:
    """Coerce a scalar or sequence to a float force vector of the given dimension."""
    arr = np.atleast_1d(np.asarray(u, dtype=float))
    if arr.shape != (dim,):
        raise DimensionMismatch(f"force must have dimension {dim}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"force must have finite components, got {arr}")
    return arr


@dataclass(frozen=True)
class PlantModel:
    """A point mass of one flavor (newtonian or relativistic) in 1 or 3 dimensions.

    f_max, when set, saturates the applied force at ||u|| <= f_max
    (rescaling, direction preserved).
    """

    consts: PhysConsts
    dim: int = 1
    flavor: str = RELATIVISTIC
    tol: Tolerances = DEFAULT_TOL
    f_max: float | None = None

    def __post_init__(self):
        if self.dim not in (1, 3):
            raise DimensionMismatch(f"plant dimension must be 1 or 3, got {self.dim}")
        if self.flavor not in FLAVORS:
            raise ValueError(f"flavor must be one of {FLAVORS}, got {self.flavor!r}")
        if self.f_max is not None and not self.f_max > 0.0:
            raise ValueError(f"f_max must be positive when set, got {self.f_max}")

    def clamp_force(self, u: np.ndarray) -> np.ndarray:
        if self.f_max is None:
            return u
        norm = float(np.linalg.norm(u))
        if norm <= self.f_max:
            return u
        return u * (self.f_max / norm)

    def rhs(self, x: StateVec, u) -> np.ndarray:
        """Time derivative [dp/dt; dv/dt] of the stacked state under force u."""
        if x.dim != self.dim:
            raise DimensionMismatch(f"state dimension {x.dim} does not match plant dimension {self.dim}")
        if self.flavor == NEWTONIAN:
            return newtonian_rhs(x, u, self)
        if self.dim == 1:
            return relativistic_rhs_1d(x, u, self)
        return relativistic_rhs_3d(x, u, self)


def accel(v: np.ndarray, u: np.ndarray, consts: PhysConsts, flavor: str,
          tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """dv/dt for raw arrays; the single source of the force laws.

    Used by the public rhs wrappers and by the integrator's hot loop.
    Relativistic flavors enforce the speed guard.
    """
    if flavor == NEWTONIAN:
        return u / consts.m0
    speed = check_speed(v, consts, tol)
    if v.shape[0] == 1:
        factor = bracket_pow(speed, consts, 1.5, tol)
        return (factor / consts.m0) * u
    root = bracket_pow(speed, consts, 0.5, tol)
    return (root / consts.m0) * (u - (float(v @ u) / consts.c ** 2) * v)


def newtonian_rhs(x: StateVec, u, plant: PlantModel) -> np.ndarray:
    """[v; u/m0], the classical law without any speed limit."""
    if plant.flavor != NEWTONIAN:
        raise ValueError("newtonian_rhs requires a plant with flavor 'newtonian'")
    force = as_force(u, x.dim)
    return np.concatenate((x.v, accel(x.v, force, plant.consts, NEWTONIAN, plant.tol)))


def relativistic_rhs_1d(x: StateVec, u, plant: PlantModel) -> np.ndarray:
    """[v; (u/m0) * (1 - v^2/c^2)^(3/2)] for the scalar plant."""
    if plant.flavor != RELATIVISTIC or plant.dim != 1 or x.dim != 1:
        raise ValueError("relativistic_rhs_1d requires a one-dimensional relativistic plant")
    force = as_force(u, 1)
    return np.concatenate((x.v, accel(x.v, force, plant.consts, RELATIVISTIC, plant.tol)))


def relativistic_rhs_3d(x: StateVec, u, plant: PlantModel) -> np.ndarray:
    """[v; sqrt(1 - |v|^2/c^2)/m0 * (F - (v.F) v / c^2)] for the vector plant."""
    if plant.flavor != RELATIVISTIC or plant.dim != 3 or x.dim != 3:
        raise ValueError("relativistic_rhs_3d requires a three-dimensional relativistic plant")
    force = as_force(u, 3)
    return np.concatenate((x.v, accel(x.v, force, plant.consts, RELATIVISTIC, plant.tol)))


def force_from_accel_3d(v, a, consts: PhysConsts, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Force producing a desired acceleration a at velocity v (3D inverse law).

    F = m0 gamma^3 (v . a) v / c^2 + m0 gamma a
    """
    v = np.asarray(v, dtype=float).reshape(3)
    a = np.asarray(a, dtype=float).reshape(3)
    gamma = lorentz_gamma(v, consts, tol)
    return consts.m0 * gamma ** 3 * (float(v @ a) / consts.c ** 2) * v + consts.m0 * gamma * a


def split_parallel_perp(w, v) -> tuple[np.ndarray, np.ndarray]:
    """Decompose w into components parallel and perpendicular to v.

    For v = 0 the parallel part is the zero vector by convention.
    """
    w = np.asarray(w, dtype=float).reshape(3)
    v = np.asarray(v, dtype=float).reshape(3)
    vnorm2 = float(v @ v)
    if vnorm2 == 0.0:
        return np.zeros(3), w.copy()
    par = (float(w @ v) / vnorm2) * v
    return par, w - par


def longitudinal_transverse_check(v, a_par, a_perp, consts: PhysConsts,
                                  tol: Tolerances = DEFAULT_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Map an aligned acceleration pair to the forces that produce it.

    a_par must be parallel to v and a_perp perpendicular to it (within
    eps_num, relative); then

        F_par  = m0 gamma^3 a_par   (longitudinal effective mass)
        F_perp = m0 gamma   a_perp  (transverse effective mass)

    and F_par + F_perp reproduces a_par + a_perp through the forward law.
    At v = 0 both reduce to multiplication by m0.
    """
    v = np.asarray(v, dtype=float).reshape(3)
    a_par = np.asarray(a_par, dtype=float).reshape(3)
    a_perp = np.asarray(a_perp, dtype=float).reshape(3)
    speed = check_speed(v, consts, tol)
    if speed > 0.0:
        par_of_par, perp_of_par = split_parallel_perp(a_par, v)
        if float(np.linalg.norm(perp_of_par)) > tol.eps_num * (1.0 + float(np.linalg.norm(a_par))):
            raise NonOrthogonalInput(f"a_par is not parallel to v (residual {np.linalg.norm(perp_of_par):.3e})")
        if abs(float(a_perp @ v)) > tol.eps_num * (1.0 + float(np.linalg.norm(a_perp)) * speed):
            raise NonOrthogonalInput(f"a_perp is not perpendicular to v (v.a_perp = {float(a_perp @ v):.3e})")
    gamma = lorentz_gamma(v, consts, tol)
    return consts.m0 * gamma ** 3 * a_par, consts.m0 * gamma * a_perp
