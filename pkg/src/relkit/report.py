"""Trajectory CSV serialization and run reports.

CSV columns are fixed per dimension:

    dim 1: t,p,v,u,w,gamma,energy,e
    dim 3: t,px,py,pz,vx,vy,vz,ux,uy,uz,wx,wy,wz,gamma,energy,ex,ey,ez

Floats are written with 17 significant digits so a round trip through text
reproduces them bit for bit.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from .core import PhysConsts
from .sim import Trajectory

_AXES = ("x", "y", "z")


def csv_header(dim: int) -> str:
    if dim == 1:
        return "t,p,v,u,w,gamma,energy,e"
    cols = ["t"]
    for name in ("p", "v", "u", "w"):
        cols.extend(f"{name}{ax}" for ax in _AXES)
    cols.extend(("gamma", "energy"))
    cols.extend(f"e{ax}" for ax in _AXES)
    return ",".join(cols)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_trajectory_csv(traj: Trajectory, path, stride: int = 1) -> int:
    """Write the trajectory, keeping every stride-th row plus the final one.

    Returns the number of data rows written.
    """
    if stride < 1:
        raise ValueError(f"stride must be at least 1, got {stride}")
    n = len(traj)
    keep = list(range(0, n, stride))
    if keep and keep[-1] != n - 1:
        keep.append(n - 1)
    with open(path, "w") as fh:
        fh.write(csv_header(traj.dim) + "\n")
        for i in keep:
            row = [traj.t[i], *traj.p[i], *traj.v[i], *traj.u[i], *traj.w[i],
                   traj.gamma[i], traj.energy[i], *traj.e[i]]
            fh.write(",".join(_fmt(val) for val in row) + "\n")
    return len(keep)


def read_trajectory_csv(path) -> Trajectory:
    """Parse a CSV written by write_trajectory_csv back into a Trajectory."""
    with open(path) as fh:
        header = fh.readline().strip()
        data = np.array([[float(tok) for tok in line.split(",")]
                         for line in fh if line.strip()])
    if header == csv_header(1):
        dim = 1
    elif header == csv_header(3):
        dim = 3
    else:
        raise ValueError(f"unrecognized trajectory header: {header!r}")
    if data.size == 0:
        data = data.reshape(0, 5 * dim + 3)
    cols = iter(range(data.shape[1]))
    take = lambda k: data[:, [next(cols) for _ in range(k)]]
    t = take(1)[:, 0]
    p, v, u, w = take(dim), take(dim), take(dim), take(dim)
    gamma = take(1)[:, 0]
    energy = take(1)[:, 0]
    e = take(dim)
    return Trajectory(dim=dim, t=t, p=p, v=v, u=u, w=w, gamma=gamma, energy=energy, e=e)


def settling_time(traj: Trajectory, band: float = 0.02) -> float | None:
    """First time after which the error norm stays within band * ||e(0)||.

    Falls back to the peak error norm as the scale when the run starts with
    zero error; returns None when the run never settles, 0.0 when the error
    is identically zero.
    """
    err = np.linalg.norm(traj.e, axis=1)
    scale = err[0] if err[0] > 0.0 else float(np.max(err))
    if scale == 0.0:
        return 0.0
    inside = err <= band * scale
    if not inside[-1]:
        return None
    idx = len(inside) - 1
    while idx > 0 and inside[idx - 1]:
        idx -= 1
    return float(traj.t[idx])


@dataclass
class RunReport:
    """Summary of one run, embedding the fully resolved scenario settings."""

    final_p: list
    final_v: list
    tracking_error: float
    settling_time: float | None
    peak_speed_ratio: float
    peak_force: float
    energy_residual: float | None
    samples: int
    wall_time_s: float
    truncated: bool
    config: dict

    def to_json(self) -> str:
        def scrub(obj):
            if isinstance(obj, dict):
                return {k: scrub(v) for k, v in obj.items()}
            if isinstance(obj, (list, tuple)):
                return [scrub(v) for v in obj]
            if isinstance(obj, float) and not np.isfinite(obj):
                return None
            return obj
        return json.dumps(scrub(asdict(self)), indent=2)


def build_report(traj: Trajectory, consts: PhysConsts, config: dict,
                 wall_time_s: float, truncated: bool = False,
                 energy_residual: float | None = None) -> RunReport:
    speeds = np.linalg.norm(traj.v, axis=1)
    forces = np.linalg.norm(traj.u, axis=1)
    final = traj.final_state
    return RunReport(
        final_p=[float(x) for x in final.p],
        final_v=[float(x) for x in final.v],
        tracking_error=float(np.linalg.norm(traj.e[-1])),
        settling_time=settling_time(traj),
        peak_speed_ratio=float(np.max(speeds)) / consts.c,
        peak_force=float(np.max(forces)),
        energy_residual=energy_residual,
        samples=len(traj),
        wall_time_s=wall_time_s,
        truncated=truncated,
        config=config,
    )


def write_report_json(report: RunReport, path) -> None:
    with open(path, "w") as fh:
        fh.write(report.to_json() + "\n")


def gnuplot_script(csv_path: str, dim: int) -> str:
    """A small gnuplot script plotting position, speed, and force columns."""
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set xlabel 't'",
        "set terminal pngcairo size 1200,800",
        f"set output '{csv_path}.png'",
        "set multiplot layout 2,1",
    ]
    if dim == 1:
        lines.append(f"plot '{csv_path}' using 1:2 with lines, '' using 1:3 with lines")
        lines.append(f"plot '{csv_path}' using 1:4 with lines, '' using 1:5 with lines")
    else:
        lines.append(f"plot '{csv_path}' using 1:2 with lines, '' using 1:3 with lines, "
                     "'' using 1:4 with lines")
        lines.append(f"plot '{csv_path}' using 1:8 with lines, '' using 1:9 with lines, "
                     "'' using 1:10 with lines")
    lines.append("unset multiplot")
    return "\n".join(lines) + "\n"


class Stopwatch:
    """Tiny wall-clock helper for report timing."""

    def __enter__(self):
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self._t0
        return False
