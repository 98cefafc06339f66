"""Scenario files: strict TOML parsing into runnable objects.

Unknown keys are hard errors that name the offending key, so typos like
``speed_of_lite`` fail loudly instead of silently running with a default.
Three schemas share the [plant]/[tolerances]/[outputs] tables: simulation
scenarios (with [controller], [initial], [reference], [integrator]),
steering scenarios ([steering]), and comparison studies ([compare]).
"""

from __future__ import annotations

import sys
from dataclasses import dataclass

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .control import (OF3D_MODES, ControlLaw, OutputFeedbackLaw, PidGains, PidLaw,
                      Reference, StateFeedbackGain, StateFeedbackLaw,
                      design_pole_placement)
from .core import PhysConsts, SI_SPEED_OF_LIGHT, StateVec, Tolerances
from .dynamics import FLAVORS, RELATIVISTIC, PlantModel
from .errors import ConfigParseError, DimensionMismatch, InvalidPoleSet
from .sim import METHODS, IntegratorCfg

UNITS = ("natural", "si")


@dataclass(frozen=True)
class OutputsCfg:
    csv: str
    report: str
    stride: int = 1
    schedule_csv: str | None = None


@dataclass(frozen=True)
class SimScenario:
    plant: PlantModel
    law: ControlLaw | None
    force: Reference | None
    reference: Reference
    x0: StateVec
    integrator: IntegratorCfg
    outputs: OutputsCfg
    echo: dict


@dataclass(frozen=True)
class SteerScenario:
    x0: StateVec
    xT: StateVec
    horizon: float
    consts: PhysConsts
    tol: Tolerances
    integrator: IntegratorCfg | None
    outputs: OutputsCfg
    echo: dict


@dataclass(frozen=True)
class CompareScenario:
    regimes: tuple
    poles: tuple
    t_end: float
    dt: float
    consts: PhysConsts
    tol: Tolerances
    outputs: OutputsCfg
    echo: dict


def _load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigParseError(f"scenario file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigParseError(f"invalid TOML in {path}: {exc}")


def _check_keys(table: dict, allowed, where: str):
    for key in table:
        if key not in allowed:
            full = f"{where}.{key}" if where else key
            raise ConfigParseError(f"unknown key '{full}'")


def _number(val, where: str) -> float:
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigParseError(f"'{where}' must be a number, got {val!r}")
    return float(val)


def _integer(val, where: str) -> int:
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigParseError(f"'{where}' must be an integer, got {val!r}")
    return val


def _boolean(val, where: str) -> bool:
    if not isinstance(val, bool):
        raise ConfigParseError(f"'{where}' must be a boolean, got {val!r}")
    return val


def _string(val, where: str) -> str:
    if not isinstance(val, str):
        raise ConfigParseError(f"'{where}' must be a string, got {val!r}")
    return val


def _vector(val, dim: int, where: str) -> np.ndarray:
    if isinstance(val, (int, float)) and not isinstance(val, bool):
        if dim != 1:
            raise ConfigParseError(f"'{where}' must be a list of {dim} numbers for a {dim}-dimensional plant")
        return np.array([float(val)])
    if isinstance(val, list) and len(val) == dim:
        return np.array([_number(x, where) for x in val])
    raise ConfigParseError(f"'{where}' must be a number or a list of {dim} numbers, got {val!r}")


def _gain_scalar_or_axes(val, dim: int, where: str):
    if isinstance(val, (int, float)) and not isinstance(val, bool):
        return float(val)
    if isinstance(val, list):
        if dim == 1:
            raise ConfigParseError(f"'{where}' must be a single number for a scalar plant")
        if len(val) != 3:
            raise ConfigParseError(f"'{where}' must have 3 entries, got {len(val)}")
        return np.array([_number(x, where) for x in val])
    raise ConfigParseError(f"'{where}' must be a number or a list of 3 numbers, got {val!r}")


def _parse_units_and_plant(raw: dict, *, fixed_flavor: str | None = None):
    units = _string(raw.get("units", "natural"), "units")
    if units not in UNITS:
        raise ConfigParseError(f"'units' must be one of {UNITS}, got {units!r}")
    plant_tbl = raw.get("plant")
    if plant_tbl is None:
        raise ConfigParseError("missing required table [plant]")
    _check_keys(plant_tbl, {"dim", "flavor", "m0", "c", "f_max"}, "plant")
    dim = _integer(plant_tbl.get("dim", 1), "plant.dim")
    if dim not in (1, 3):
        raise ConfigParseError(f"'plant.dim' must be 1 or 3, got {dim}")
    flavor = _string(plant_tbl.get("flavor", RELATIVISTIC), "plant.flavor")
    if flavor not in FLAVORS:
        raise ConfigParseError(f"'plant.flavor' must be one of {FLAVORS}, got {flavor!r}")
    if fixed_flavor is not None and flavor != fixed_flavor:
        raise ConfigParseError(f"this scenario type requires plant.flavor = '{fixed_flavor}'")
    m0 = _number(plant_tbl.get("m0", 1.0), "plant.m0")
    c_default = 1.0 if units == "natural" else SI_SPEED_OF_LIGHT
    c = _number(plant_tbl.get("c", c_default), "plant.c")
    f_max = plant_tbl.get("f_max")
    if f_max is not None:
        f_max = _number(f_max, "plant.f_max")
    tol_tbl = raw.get("tolerances", {})
    _check_keys(tol_tbl, {"eps_v", "eps_num"}, "tolerances")
    try:
        tol = Tolerances(eps_v=_number(tol_tbl.get("eps_v", 1e-12), "tolerances.eps_v"),
                         eps_num=_number(tol_tbl.get("eps_num", 1e-9), "tolerances.eps_num"))
        consts = PhysConsts(c=c, m0=m0)
        plant = PlantModel(consts=consts, dim=dim, flavor=flavor, tol=tol, f_max=f_max)
    except (ValueError, DimensionMismatch) as exc:
        raise ConfigParseError(str(exc))
    echo = {"units": units,
            "plant": {"dim": dim, "flavor": flavor, "m0": m0, "c": c, "f_max": f_max},
            "tolerances": {"eps_v": tol.eps_v, "eps_num": tol.eps_num}}
    return plant, echo


def _parse_outputs(raw: dict, *, default_csv: str, default_report: str,
                   schedule_default: str | None = None) -> tuple[OutputsCfg, dict]:
    tbl = raw.get("outputs", {})
    allowed = {"csv", "report", "stride"}
    if schedule_default is not None:
        allowed.add("schedule_csv")
    _check_keys(tbl, allowed, "outputs")
    stride = _integer(tbl.get("stride", 1), "outputs.stride")
    if stride < 1:
        raise ConfigParseError(f"'outputs.stride' must be at least 1, got {stride}")
    out = OutputsCfg(csv=_string(tbl.get("csv", default_csv), "outputs.csv"),
                     report=_string(tbl.get("report", default_report), "outputs.report"),
                     stride=stride,
                     schedule_csv=_string(tbl.get("schedule_csv", schedule_default),
                                          "outputs.schedule_csv") if schedule_default is not None else None)
    echo = {"csv": out.csv, "report": out.report, "stride": out.stride}
    if out.schedule_csv is not None:
        echo["schedule_csv"] = out.schedule_csv
    return out, echo


def _parse_integrator(raw: dict, *, require_t_end: bool, forbid_t_end: bool = False):
    tbl = raw.get("integrator", {})
    allowed = {"method", "dt", "rel_tol", "abs_tol", "max_steps", "zoh_dt", "dt_max"}
    if not forbid_t_end:
        allowed.add("t_end")
    _check_keys(tbl, allowed, "integrator")
    if require_t_end and "t_end" not in tbl:
        raise ConfigParseError("missing required key 'integrator.t_end'")
    method = _string(tbl.get("method", "rk4"), "integrator.method")
    if method not in METHODS:
        raise ConfigParseError(f"'integrator.method' must be one of {METHODS}, got {method!r}")
    kwargs = dict(method=method,
                  dt=_number(tbl.get("dt", 1e-3), "integrator.dt"),
                  rel_tol=_number(tbl.get("rel_tol", 1e-8), "integrator.rel_tol"),
                  abs_tol=_number(tbl.get("abs_tol", 1e-10), "integrator.abs_tol"),
                  max_steps=_integer(tbl.get("max_steps", 10_000_000), "integrator.max_steps"))
    if "t_end" in tbl:
        kwargs["t_end"] = _number(tbl["t_end"], "integrator.t_end")
    if "zoh_dt" in tbl:
        kwargs["zoh_dt"] = _number(tbl["zoh_dt"], "integrator.zoh_dt")
    if "dt_max" in tbl:
        kwargs["dt_max"] = _number(tbl["dt_max"], "integrator.dt_max")
    return kwargs, ("integrator" in raw)


def _build_integrator(kwargs: dict) -> IntegratorCfg:
    try:
        return IntegratorCfg(**kwargs)
    except ValueError as exc:
        raise ConfigParseError(str(exc))


def _parse_reference(raw: dict, dim: int) -> tuple[Reference, dict]:
    tbl = raw.get("reference", {})
    _check_keys(tbl, {"constant", "schedule"}, "reference")
    if "constant" in tbl and "schedule" in tbl:
        raise ConfigParseError("'reference' takes either 'constant' or 'schedule', not both")
    if "schedule" in tbl:
        sched = tbl["schedule"]
        if not isinstance(sched, list) or not sched:
            raise ConfigParseError("'reference.schedule' must be a non-empty list of [t, value] pairs")
        knots = []
        for i, item in enumerate(sched):
            if not isinstance(item, list) or len(item) != 2:
                raise ConfigParseError(f"'reference.schedule[{i}]' must be a [t, value] pair")
            knots.append((_number(item[0], f"reference.schedule[{i}].t"),
                          _vector(item[1], dim, f"reference.schedule[{i}].value")))
        try:
            ref = Reference.steps(knots, dim)
        except ValueError as exc:
            raise ConfigParseError(f"reference.schedule: {exc}")
        return ref, {"schedule": [[t, list(map(float, v))] for t, v in knots]}
    value = _vector(tbl.get("constant", 0.0 if dim == 1 else [0.0] * 3), dim,
                    "reference.constant")
    return Reference.const(value, dim), {"constant": [float(x) for x in value]}


_KIND_KEYS = {
    "state_feedback": {"kind", "wrapped", "poles", "gains"},
    "output_feedback": {"kind", "wrapped", "l_gain", "of3d_mode"},
    "pid": {"kind", "wrapped", "kp", "ki", "kd", "i_max"},
    "none": {"kind", "force", "schedule"},
}


def _parse_controller(raw: dict, dim: int, consts: PhysConsts, reference: Reference):
    tbl = raw.get("controller")
    if tbl is None:
        raise ConfigParseError("missing required table [controller]")
    kind = _string(tbl.get("kind", ""), "controller.kind")
    if kind not in _KIND_KEYS:
        raise ConfigParseError(f"'controller.kind' must be one of {sorted(_KIND_KEYS)}, got {kind!r}")
    for key in tbl:
        if key not in _KIND_KEYS[kind]:
            if any(key in keys for keys in _KIND_KEYS.values()):
                raise ConfigParseError(f"key 'controller.{key}' is not valid for kind '{kind}'")
            raise ConfigParseError(f"unknown key 'controller.{key}'")
    wrapped = _boolean(tbl.get("wrapped", True), "controller.wrapped")
    echo = {"kind": kind, "wrapped": wrapped}

    if kind == "state_feedback":
        if ("poles" in tbl) == ("gains" in tbl):
            raise ConfigParseError("state_feedback takes exactly one of 'poles' or 'gains'")
        try:
            if "poles" in tbl:
                poles = tbl["poles"]
                if not isinstance(poles, list) or not all(
                        isinstance(p, (int, float)) and not isinstance(p, bool) for p in poles):
                    raise ConfigParseError("'controller.poles' must be a list of numbers")
                gain = design_pole_placement([float(p) for p in poles], dim, consts)
                echo["poles"] = [float(p) for p in poles]
            else:
                rows = tbl["gains"]
                gain = StateFeedbackGain(np.asarray(rows, dtype=float))
                if gain.dim != dim:
                    raise ConfigParseError(f"'controller.gains' has dimension {gain.dim}, plant has {dim}")
            echo["gains"] = [[float(x) for x in row] for row in gain.K]
        except (InvalidPoleSet, DimensionMismatch, ValueError) as exc:
            raise ConfigParseError(f"controller: {exc}")
        return StateFeedbackLaw(gain=gain, wrapped=wrapped), None, echo

    if kind == "output_feedback":
        if "l_gain" not in tbl:
            raise ConfigParseError("missing required key 'controller.l_gain'")
        l_gain = _gain_scalar_or_axes(tbl["l_gain"], dim, "controller.l_gain")
        mode = _string(tbl.get("of3d_mode", "verbatim"), "controller.of3d_mode")
        if mode not in OF3D_MODES:
            raise ConfigParseError(f"'controller.of3d_mode' must be one of {OF3D_MODES}, got {mode!r}")
        if reference.constant is None:
            raise ConfigParseError("output_feedback requires a constant reference")
        r0 = reference.constant

        def l_map(y, _r0=r0, _g=l_gain):
            return _g * (_r0 - y)

        echo["l_gain"] = [float(x) for x in np.atleast_1d(l_gain)] if np.ndim(l_gain) else float(l_gain)
        echo["of3d_mode"] = mode
        return OutputFeedbackLaw(l=l_map, wrapped=wrapped, of3d_mode=mode), None, echo

    if kind == "pid":
        try:
            gains = PidGains(kp=_gain_scalar_or_axes(tbl.get("kp", 0.0), dim, "controller.kp"),
                             ki=_gain_scalar_or_axes(tbl.get("ki", 0.0), dim, "controller.ki"),
                             kd=_gain_scalar_or_axes(tbl.get("kd", 0.0), dim, "controller.kd"))
            i_max = tbl.get("i_max")
            if i_max is not None:
                i_max = _number(i_max, "controller.i_max")
            law = PidLaw(gains=gains, wrapped=wrapped, i_max=i_max)
        except (ValueError, DimensionMismatch) as exc:
            raise ConfigParseError(f"controller: {exc}")
        for name in ("kp", "ki", "kd"):
            val = getattr(gains, name)
            echo[name] = [float(x) for x in val] if np.ndim(val) else float(val)
        echo["i_max"] = i_max
        return law, None, echo

    # kind == "none": an open-loop force, constant or piecewise constant
    if ("force" in tbl) == ("schedule" in tbl):
        raise ConfigParseError("controller kind 'none' takes exactly one of 'force' or 'schedule'")
    echo.pop("wrapped")
    if "force" in tbl:
        value = _vector(tbl["force"], dim, "controller.force")
        echo["force"] = [float(x) for x in value]
        return None, Reference.const(value, dim), echo
    sched = tbl["schedule"]
    if not isinstance(sched, list) or not sched:
        raise ConfigParseError("'controller.schedule' must be a non-empty list of [t, force] pairs")
    knots = []
    for i, item in enumerate(sched):
        if not isinstance(item, list) or len(item) != 2:
            raise ConfigParseError(f"'controller.schedule[{i}]' must be a [t, force] pair")
        knots.append((_number(item[0], f"controller.schedule[{i}].t"),
                      _vector(item[1], dim, f"controller.schedule[{i}].force")))
    try:
        force = Reference.steps(knots, dim)
    except ValueError as exc:
        raise ConfigParseError(f"controller.schedule: {exc}")
    echo["schedule"] = [[t, list(map(float, v))] for t, v in knots]
    return None, force, echo


_SIM_TOP = {"units", "plant", "tolerances", "initial", "reference", "controller",
            "integrator", "outputs"}


def load_scenario(path) -> SimScenario:
    """Parse a simulation scenario file."""
    raw = _load_toml(path)
    _check_keys(raw, _SIM_TOP, "")
    plant, echo = _parse_units_and_plant(raw)
    dim = plant.dim

    init_tbl = raw.get("initial", {})
    _check_keys(init_tbl, {"p", "v"}, "initial")
    p0 = _vector(init_tbl.get("p", 0.0 if dim == 1 else [0.0] * 3), dim, "initial.p")
    v0 = _vector(init_tbl.get("v", 0.0 if dim == 1 else [0.0] * 3), dim, "initial.v")
    try:
        x0 = StateVec(p=p0, v=v0)
    except (ValueError, DimensionMismatch) as exc:
        raise ConfigParseError(f"initial: {exc}")
    echo["initial"] = {"p": [float(x) for x in x0.p], "v": [float(x) for x in x0.v]}

    reference, ref_echo = _parse_reference(raw, dim)
    echo["reference"] = ref_echo
    law, force, ctrl_echo = _parse_controller(raw, dim, plant.consts, reference)
    echo["controller"] = ctrl_echo

    kwargs, _ = _parse_integrator(raw, require_t_end=True)
    integrator = _build_integrator(kwargs)
    echo["integrator"] = {"method": integrator.method, "dt": integrator.dt,
                          "t_end": integrator.t_end, "rel_tol": integrator.rel_tol,
                          "abs_tol": integrator.abs_tol, "max_steps": integrator.max_steps,
                          "zoh_dt": integrator.zoh_dt, "dt_max": integrator.dt_max}
    outputs, out_echo = _parse_outputs(raw, default_csv="trajectory.csv",
                                       default_report="report.json")
    echo["outputs"] = out_echo
    return SimScenario(plant=plant, law=law, force=force, reference=reference,
                       x0=x0, integrator=integrator, outputs=outputs, echo=echo)


_STEER_TOP = {"units", "plant", "tolerances", "steering", "integrator", "outputs"}


def load_steering(path) -> SteerScenario:
    """Parse a steering scenario file ([steering] with endpoints and horizon)."""
    raw = _load_toml(path)
    _check_keys(raw, _STEER_TOP, "")
    plant, echo = _parse_units_and_plant(raw, fixed_flavor=RELATIVISTIC)
    dim = plant.dim
    tbl = raw.get("steering")
    if tbl is None:
        raise ConfigParseError("missing required table [steering]")
    _check_keys(tbl, {"p0", "v0", "pT", "vT", "horizon"}, "steering")
    for key in ("p0", "v0", "pT", "vT", "horizon"):
        if key not in tbl:
            raise ConfigParseError(f"missing required key 'steering.{key}'")
    horizon = _number(tbl["horizon"], "steering.horizon")
    try:
        x0 = StateVec(p=_vector(tbl["p0"], dim, "steering.p0"),
                      v=_vector(tbl["v0"], dim, "steering.v0"))
        xT = StateVec(p=_vector(tbl["pT"], dim, "steering.pT"),
                      v=_vector(tbl["vT"], dim, "steering.vT"))
    except (ValueError, DimensionMismatch) as exc:
        raise ConfigParseError(f"steering: {exc}")
    echo["steering"] = {"p0": [float(x) for x in x0.p], "v0": [float(x) for x in x0.v],
                        "pT": [float(x) for x in xT.p], "vT": [float(x) for x in xT.v],
                        "horizon": horizon}
    kwargs, present = _parse_integrator(raw, require_t_end=False, forbid_t_end=True)
    integrator = None
    if present:
        kwargs["t_end"] = horizon
        if kwargs["method"] == "rk4" and kwargs.get("zoh_dt") is None:
            # keep the rk4 grid compatible with an arbitrary horizon
            kwargs["dt"] = min(kwargs["dt"], horizon)
        integrator = _build_integrator(kwargs)
        echo["integrator"] = {k: getattr(integrator, k) for k in
                              ("method", "dt", "t_end", "rel_tol", "abs_tol",
                               "max_steps", "zoh_dt", "dt_max")}
    outputs, out_echo = _parse_outputs(raw, default_csv="trajectory.csv",
                                       default_report="report.json",
                                       schedule_default="schedule.csv")
    echo["outputs"] = out_echo
    return SteerScenario(x0=x0, xT=xT, horizon=horizon, consts=plant.consts,
                         tol=plant.tol, integrator=integrator, outputs=outputs,
                         echo=echo)


_COMPARE_TOP = {"units", "plant", "tolerances", "compare", "outputs"}


def load_compare(path) -> CompareScenario:
    """Parse a comparison-study file ([compare] with speed regimes)."""
    raw = _load_toml(path)
    _check_keys(raw, _COMPARE_TOP, "")
    plant, echo = _parse_units_and_plant(raw, fixed_flavor=RELATIVISTIC)
    if plant.dim != 1:
        raise ConfigParseError("comparison studies run on the scalar plant; set plant.dim = 1")
    tbl = raw.get("compare")
    if tbl is None:
        raise ConfigParseError("missing required table [compare]")
    _check_keys(tbl, {"regimes", "poles", "t_end", "dt"}, "compare")
    regimes = tbl.get("regimes")
    if not isinstance(regimes, list) or not regimes:
        raise ConfigParseError("'compare.regimes' must be a non-empty list of v/c values")
    regimes = tuple(_number(r, "compare.regimes") for r in regimes)
    for r in regimes:
        if not 0.0 <= r < 1.0:
            raise ConfigParseError(f"'compare.regimes' entries must lie in [0, 1), got {r}")
    poles_raw = tbl.get("poles", [-1.0, -2.0])
    if not isinstance(poles_raw, list):
        raise ConfigParseError("'compare.poles' must be a list of numbers")
    poles = tuple(_number(p, "compare.poles") for p in poles_raw)
    t_end = _number(tbl.get("t_end", 10.0), "compare.t_end")
    dt = _number(tbl.get("dt", 1e-3), "compare.dt")
    if not t_end > 0.0 or not dt > 0.0:
        raise ConfigParseError("'compare.t_end' and 'compare.dt' must be positive")
    echo["compare"] = {"regimes": list(regimes), "poles": list(poles),
                       "t_end": t_end, "dt": dt}
    outputs, out_echo = _parse_outputs(raw, default_csv="mismatch.csv",
                                       default_report="summary.json")
    echo["outputs"] = out_echo
    return CompareScenario(regimes=regimes, poles=poles, t_end=t_end, dt=dt,
                           consts=plant.consts, tol=plant.tol, outputs=outputs,
                           echo=echo)


def detect_kind(path) -> str:
    """Classify a scenario file by its tables: simulate, steer, or compare."""
    raw = _load_toml(path)
    if "steering" in raw:
        return "steer"
    if "compare" in raw:
        return "compare"
    return "simulate"
