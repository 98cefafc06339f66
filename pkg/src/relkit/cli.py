"""Command-line front end: simulate, steer, compare, validate.

Exit codes: 0 on success, 2 for configuration and validation problems
(including steering targets past the speed of light), 3 when a run aborts
mid-flight; in that case whatever trajectory prefix exists is still written,
with "truncated": true in the report.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .analysis import SteeringProblem, mismatch_cell, min_energy_steer
from .config import (CompareScenario, SimScenario, SteerScenario, detect_kind,
                     load_compare, load_scenario, load_steering)
from .control import design_pole_placement
from .errors import (ConfigParseError, HorizonExhausted, InvalidPoleSet,
                     NonFiniteState, RelkitError, SpeedBoundViolation,
                     StepCountExceeded)
from .linearize import force_from_virtual_raw
from .report import (Stopwatch, build_report, gnuplot_script, write_report_json,
                     write_trajectory_csv)
from .sim import energy_audit, integrate_closed_loop, integrate_open_loop

_SIM_ABORTS = (SpeedBoundViolation, StepCountExceeded, NonFiniteState)


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _out_path(args, name: str) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def _thread_count() -> int:
    raw = os.environ.get("RELKIT_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        if raw:
            print(f"warning: ignoring non-integer RELKIT_THREADS={raw!r}", file=sys.stderr)
        return 1
    return max(1, n)


def _write_run_outputs(args, sc, traj, wall, truncated: bool) -> str:
    residual = None
    if not truncated and len(traj) >= 2:
        residual = energy_audit(traj)
    report = build_report(traj, sc.plant.consts, sc.echo, wall,
                          truncated=truncated, energy_residual=residual)
    csv_path = _out_path(args, sc.outputs.csv)
    write_trajectory_csv(traj, csv_path, stride=sc.outputs.stride)
    write_report_json(report, _out_path(args, sc.outputs.report))
    if getattr(args, "gnuplot_script", False):
        with open(csv_path + ".gp", "w") as fh:
            fh.write(gnuplot_script(csv_path, traj.dim))
    return csv_path


def cmd_simulate(args) -> int:
    try:
        sc = load_scenario(args.config)
    except ConfigParseError as exc:
        return _fail(str(exc), 2)
    try:
        with Stopwatch() as watch:
            if sc.law is None:
                traj = integrate_open_loop(sc.plant, sc.force.value, sc.integrator,
                                           sc.x0, ref=sc.reference)
            else:
                traj = integrate_closed_loop(sc.plant, sc.law, sc.reference,
                                             sc.integrator, sc.x0)
    except _SIM_ABORTS as exc:
        if exc.partial is not None and len(exc.partial) > 0:
            _write_run_outputs(args, sc, exc.partial, 0.0, truncated=True)
        return _fail(f"simulation aborted: {exc}", 3)
    csv_path = _write_run_outputs(args, sc, traj, watch.elapsed, truncated=False)
    final = traj.final_state
    print(f"simulated {sc.plant.flavor} dim={sc.plant.dim} to t={sc.integrator.t_end:g} "
          f"({len(traj)} samples)")
    print(f"final p={np.array2string(final.p, precision=9)} "
          f"v={np.array2string(final.v, precision=9)}")
    print(f"wrote {csv_path} and {_out_path(args, sc.outputs.report)}")
    return 0


def _schedule_header(dim: int) -> str:
    if dim == 1:
        return "t,w,u"
    return "t,wx,wy,wz,ux,uy,uz"


def _write_schedule_csv(path, sol, traj, samples: int = 1001):
    ts = np.linspace(0.0, sol.horizon, samples)
    v_interp = np.column_stack([np.interp(ts, traj.t, traj.v[:, k])
                                for k in range(traj.dim)])
    with open(path, "w") as fh:
        fh.write(_schedule_header(traj.dim) + "\n")
        for t, v in zip(ts, v_interp):
            w = np.atleast_1d(np.asarray(sol.w_of_t(t), dtype=float))
            u = force_from_virtual_raw(v, w, sol.problem.consts, sol.problem.tol)
            row = [t, *w, *u]
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def cmd_steer(args) -> int:
    try:
        sc = load_steering(args.config)
    except ConfigParseError as exc:
        return _fail(str(exc), 2)
    try:
        problem = SteeringProblem(x0=sc.x0, xT=sc.xT, horizon=sc.horizon,
                                  consts=sc.consts, tol=sc.tol)
    except SpeedBoundViolation as exc:
        return _fail(f"unreachable: exceeds speed of light ({exc})", 2)
    except (ValueError, RelkitError) as exc:
        return _fail(str(exc), 2)
    try:
        with Stopwatch() as watch:
            sol = min_energy_steer(problem, sc.integrator)
    except HorizonExhausted as exc:
        return _fail(str(exc), 2)
    except _SIM_ABORTS as exc:
        return _fail(f"steering realization aborted: {exc}", 3)
    traj = sol.trajectory
    residual = energy_audit(traj) if len(traj) >= 2 else None
    report = build_report(traj, sc.consts, sc.echo, watch.elapsed,
                          truncated=False, energy_residual=residual)
    payload = json.loads(report.to_json())
    payload["steering"] = {
        "horizon_requested": sc.horizon,
        "horizon_used": sol.horizon,
        "doublings": sol.doublings,
        "endpoint_error": sol.endpoint_error,
        "predicted_peak_speed": sol.predicted_peak_speed,
        "realized_peak_speed": sol.realized_peak_speed,
    }
    csv_path = _out_path(args, sc.outputs.csv)
    write_trajectory_csv(traj, csv_path, stride=sc.outputs.stride)
    with open(_out_path(args, sc.outputs.report), "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    if sc.outputs.schedule_csv:
        _write_schedule_csv(_out_path(args, sc.outputs.schedule_csv), sol, traj)
    if args.gnuplot_script:
        with open(csv_path + ".gp", "w") as fh:
            fh.write(gnuplot_script(csv_path, traj.dim))
    print(f"steered in T={sol.horizon:g} ({sol.doublings} horizon doublings), "
          f"endpoint error {sol.endpoint_error:.3e}")
    print(f"predicted peak speed {sol.predicted_peak_speed:.6g}, "
          f"realized {sol.realized_peak_speed:.6g}")
    print(f"wrote {csv_path} and {_out_path(args, sc.outputs.report)}")
    return 0


_COMPARE_COLUMNS = ("v_scale", "mismatch", "final_err_wrapped", "final_err_unwrapped",
                    "settle_wrapped", "settle_unwrapped", "linfit_wrapped",
                    "linfit_unwrapped")


def _write_compare_csv(path, rows):
    with open(path, "w") as fh:
        fh.write(",".join(_COMPARE_COLUMNS) + "\n")
        for row in rows:
            vals = [getattr(row, col) for col in _COMPARE_COLUMNS]
            fh.write(",".join("nan" if v is None else f"{v:.17g}" for v in vals) + "\n")


def cmd_compare(args) -> int:
    try:
        sc = load_compare(args.config)
        gain = design_pole_placement(sc.poles, 1, sc.consts)
    except (ConfigParseError, InvalidPoleSet) as exc:
        return _fail(str(exc), 2)

    def run_cell(scale):
        return mismatch_cell(gain, scale, sc.consts, sc.tol, t_end=sc.t_end, dt=sc.dt)

    threads = _thread_count()
    outcomes = []
    if threads > 1 and len(sc.regimes) > 1:
        with ThreadPoolExecutor(max_workers=min(threads, len(sc.regimes))) as pool:
            futures = [pool.submit(run_cell, s) for s in sc.regimes]
            for fut in futures:
                try:
                    outcomes.append(fut.result())
                except Exception as exc:
                    outcomes.append(exc)
    else:
        for s in sc.regimes:
            try:
                outcomes.append(run_cell(s))
            except Exception as exc:
                outcomes.append(exc)
    rows = [o for o in outcomes if not isinstance(o, Exception)]
    failures = [(s, o) for s, o in zip(sc.regimes, outcomes) if isinstance(o, Exception)]
    csv_path = _out_path(args, sc.outputs.csv)
    _write_compare_csv(csv_path, rows)
    mismatches = [r.mismatch for r in rows]
    summary = {
        "regimes": [{col: getattr(r, col) for col in _COMPARE_COLUMNS} for r in rows],
        "monotone_mismatch": all(a < b for a, b in zip(mismatches, mismatches[1:])),
        "failed_regimes": [float(s) for s, _ in failures],
        "config": sc.echo,
    }
    with open(_out_path(args, sc.outputs.report), "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    for row in rows:
        print(f"v/c={row.v_scale:g}: mismatch={row.mismatch:.6e} "
              f"linfit wrapped={row.linfit_wrapped:.3e} unwrapped={row.linfit_unwrapped:.3e}")
    print(f"wrote {csv_path} and {_out_path(args, sc.outputs.report)}")
    if failures:
        scale, exc = failures[0]
        return _fail(f"regime v/c={scale:g} failed: {exc} (partial table written)", 3)
    return 0


def cmd_validate(args) -> int:
    try:
        kind = detect_kind(args.config)
        loader = {"simulate": load_scenario, "steer": load_steering,
                  "compare": load_compare}[kind]
        loader(args.config)
    except ConfigParseError as exc:
        return _fail(str(exc), 2)
    print(f"OK: valid {kind} scenario")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relkit",
        description="Simulate and steer speed-limited point masses with exactly linearizing controllers.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, gnuplot: bool):
        p.add_argument("--config", required=True, help="scenario TOML file")
        p.add_argument("--out-dir", default=".", help="directory for output files")
        if gnuplot:
            p.add_argument("--gnuplot-script", action="store_true",
                           help="also write a gnuplot script next to the CSV")

    p_sim = sub.add_parser("simulate", help="run one closed- or open-loop scenario")
    add_common(p_sim, gnuplot=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_steer = sub.add_parser("steer", help="plan and realize a minimum-energy transfer")
    add_common(p_steer, gnuplot=True)
    p_steer.set_defaults(func=cmd_steer)

    p_cmp = sub.add_parser("compare", help="wrapped vs unwrapped controller study")
    add_common(p_cmp, gnuplot=False)
    p_cmp.set_defaults(func=cmd_compare)

    p_val = sub.add_parser("validate", help="check a scenario file without running it")
    p_val.add_argument("--config", required=True, help="scenario TOML file")
    p_val.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
