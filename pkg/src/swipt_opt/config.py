"""
Scenario files, unit conversion and named presets.

A scenario file is a flat list of ``key = value [unit]`` lines. Keys are dotted
paths such as ``radio.alpha``; a ``[radio]`` header prefixes the keys below it.
``#`` starts a comment. Values are converted to SI at parse time, so
``qos.h0 = 1 mW`` and ``qos.h0 = 0.001`` are the same setting.

Layering order is: presets, then files, then individual ``key=value``
overrides. Unknown keys, bad units and invalid values are collected and
reported together.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from typing import Iterable, Optional

from .core import (
    LinearCurve,
    ScenarioConfig,
    SigmoidCurve,
    ValidationError,
    validate,
)
from .objective import FitnessWeights
from .simulator import SimConfig
from .solver import GaConfig

__all__ = [
    "RunConfig",
    "ConfigError",
    "KEYS",
    "PRESETS",
    "load_config",
    "parse_text",
    "parse_value",
    "preset_names",
    "key_table",
]


class ConfigError(ValidationError):
    """Parse or validation problems, each as ``(key, message)``."""


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    ga: GaConfig = field(default_factory=GaConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    fitness: FitnessWeights = field(default_factory=FitnessWeights)
    grid_steps: tuple = (20, 20, 20)
    grid_refine: int = 5


# ---------------------------------------------------------------------------
# units


def _dbm(x):
    return 10.0 ** (x / 10.0) * 1e-3


def _db(x):
    return 10.0 ** (x / 10.0)


_UNITS = {
    "power": ("W", {"W": 1.0, "mW": 1e-3, "uW": 1e-6, "kW": 1e3,
                    "dBm": _dbm, "dBW": _db}),
    "density": ("m^-2", {"m^-2": 1.0, "1/m^2": 1.0, "km^-2": 1e-6, "1/km^2": 1e-6}),
    "freq": ("Hz", {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9}),
    "psd": ("W/Hz", {"W/Hz": 1.0, "dBm/Hz": _dbm, "dBW/Hz": _db}),
    "inv_power": ("1/W", {"1/W": 1.0, "W^-1": 1.0, "1/mW": 1e3, "mW^-1": 1e3}),
    "angle": ("deg", {"deg": 1.0, "rad": 180.0 / math.pi}),
    "delay": ("s/bit", {"s/bit": 1.0, "ms/bit": 1e-3, "us/bit": 1e-6, "ns/bit": 1e-9}),
    "length": ("m", {"m": 1.0, "km": 1e3}),
    "ratio": ("", {"": 1.0, "dB": _db, "dBi": _db}),
    "float": ("", {"": 1.0}),
}

_NUM = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(.*?)\s*$")
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def parse_value(text: str, kind: str):
    """Convert ``text`` to the internal value of ``kind``; raises ValueError."""
    text = text.strip()
    if kind == "bool":
        low = text.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind == "int":
        v = float(text)
        if v != int(v):
            raise ValueError(f"expected an integer, got {text!r}")
        return int(v)
    if kind.startswith("choice:"):
        opts = kind.split(":", 1)[1].split("|")
        if text.lower() not in opts:
            raise ValueError(f"expected one of {opts}, got {text!r}")
        return text.lower()
    if kind.startswith("opt_"):
        if text.lower() in ("auto", "none", ""):
            return None
        return parse_value(text, kind[4:])
    if kind.startswith("list_"):
        if not text:
            return ()
        return tuple(parse_value(t, kind[5:]) for t in text.split(","))
    m = _NUM.match(text)
    if not m:
        raise ValueError(f"expected a number, got {text!r}")
    num, unit = float(m.group(1)), m.group(2)
    default, table = _UNITS[kind]
    unit = unit or default
    if unit not in table:
        raise ValueError(f"unit {unit!r} not accepted; use one of {sorted(table)}")
    conv = table[unit]
    return conv(num) if callable(conv) else num * conv


# ---------------------------------------------------------------------------
# key table: key -> (group, attribute path, kind, description)

def _k(group, attr, kind, doc):
    return (group, attr, kind, doc)


KEYS = {
    "radio.bandwidth": _k("scenario", "radio.bandwidth", "freq", "system bandwidth B"),
    "radio.reuse": _k("scenario", "radio.reuse", "int", "frequency reuse factor k"),
    "radio.alpha": _k("scenario", "radio.alpha", "float", "path-loss exponent, > 2"),
    "radio.p_tx": _k("scenario", "radio.p_tx", "power", "BS transmit power P (decision)"),
    "radio.p_min": _k("scenario", "radio.p_min", "power", "lower bound of P"),
    "radio.p_max": _k("scenario", "radio.p_max", "power", "upper bound of P"),
    "radio.gain": _k("scenario", "radio.gain", "ratio", "main-lobe gain G"),
    "radio.aperture_deg": _k("scenario", "radio.aperture_deg", "angle", "main-lobe aperture a"),
    "radio.L": _k("scenario", "radio.side_lobe_override", "opt_ratio",
                  "side-lobe loss L; 'auto' derives it from G and a"),
    "noise.n0": _k("scenario", "radio.n0", "psd", "noise spectral density N0"),
    "noise.raw": _k("scenario", "radio.noise_raw", "bool",
                    "use N0 verbatim as the noise power instead of N0*B/k"),
    "population.lambda_u": _k("scenario", "population.lambda_u", "density", "user density"),
    "population.lambda_b": _k("scenario", "population.lambda_b", "density",
                              "BS density (decision)"),
    "population.gamma": _k("scenario", "population.iot_fraction", "float", "IoT share of users"),
    "population.phi": _k("scenario", "population.duty_cycle", "float",
                         "IoT active-state fraction"),
    "population.m_min": _k("scenario", "population.min_users_per_bs", "float",
                           "minimum users per BS"),
    "population.lambda_b_min": _k("scenario", "population.lambda_b_min", "density",
                                  "search lower bound of BS density"),
    "population.lambda_b_max": _k("scenario", "population.lambda_b_max", "density",
                                  "upper bound of BS density"),
    "scheduling.delta_d": _k("scenario", "scheduling.delta_d", "float",
                             "downlink BB:IoT delay ratio"),
    "scheduling.delta_u": _k("scenario", "scheduling.delta_u", "float",
                             "uplink BB:IoT delay ratio"),
    "scheduling.w_d": _k("scenario", "scheduling.w_d", "opt_float",
                         "downlink BB weight; 'auto' is the fair weight"),
    "scheduling.p_bb": _k("scenario", "scheduling.p_bb", "power", "BB uplink power"),
    "scheduling.p_iot": _k("scenario", "scheduling.p_iot", "power", "IoT uplink power"),
    "qos.tau_d0": _k("scenario", "qos.tau_d0", "delay", "downlink ideal-delay target"),
    "qos.tau_u0": _k("scenario", "qos.tau_u0", "delay", "uplink ideal-delay target"),
    "qos.h0": _k("scenario", "qos.h0", "power", "minimum harvested power"),
    "qos.mu": _k("scenario", "qos.mu", "float", "allowed harvest outage"),
    "energy.q1": _k("scenario", "energy.q1", "power", "BS idle power"),
    "energy.q2": _k("scenario", "energy.q2", "power", "BS load-dependent power"),
    "energy.q3": _k("scenario", "energy.q3", "float", "BS power per W of P above P_min"),
    "harvest.curve": _k("harvest", "curve", "choice:linear|sigmoid", "harvester model"),
    "harvest.xi": _k("harvest", "xi", "float", "linear harvester efficiency"),
    "harvest.h_max": _k("harvest", "h_max", "power", "sigmoid saturation power"),
    "harvest.h_s": _k("harvest", "h_s", "power", "sigmoid sensitivity threshold"),
    "harvest.chi": _k("harvest", "chi", "inv_power", "sigmoid steepness"),
    "harvest.iota": _k("harvest", "iota", "float", "sigmoid offset"),
    "sources.serving_passive": _k("scenario", "sources.serving_passive", "bool",
                                  "harvest the serving BS while it serves others"),
    "sources.other_bs": _k("scenario", "sources.other_bs", "bool", "harvest other BSs"),
    "sources.users": _k("scenario", "sources.users", "bool", "harvest user uplinks"),
    "mode.kind": _k("scenario", "mode.kind", "choice:ts|sps|dps", "receiver architecture"),
    "mode.split": _k("scenario", "mode.split", "float", "split factor eta or nu (decision)"),
    "numerics.quad_rel_tol": _k("scenario", "numerics.quad_rel_tol", "float",
                                "adaptive quadrature tolerance"),
    "numerics.tail_mass": _k("scenario", "numerics.tail_mass", "float",
                             "radial truncation, lambda_b*pi*r^2"),
    "numerics.fp_tol": _k("scenario", "numerics.fp_tol", "float",
                          "fixed-point tolerance relative to tau_d0"),
    "numerics.fp_damping": _k("scenario", "numerics.fp_damping", "float",
                              "fixed-point damping"),
    "numerics.fp_max_iter": _k("scenario", "numerics.fp_max_iter", "int",
                               "fixed-point iteration cap"),
    "numerics.aitken": _k("scenario", "numerics.aitken", "bool", "Aitken acceleration"),
    "numerics.cdf_verbatim": _k("scenario", "numerics.cdf_verbatim", "bool",
                                "literal serving-distance CDF for the harvest CDF"),
    "fitness.k1": _k("fitness", "k1", "float", "uplink utilization penalty"),
    "fitness.k2": _k("fitness", "k2", "float", "harvest outage penalty"),
    "fitness.k3": _k("fitness", "k3", "float", "downlink utilization penalty"),
    "fitness.verbatim": _k("fitness", "verbatim", "bool", "literal sign of the harvest hinge"),
    "fitness.failure_factor": _k("fitness", "failure_factor", "float",
                                 "penalty multiple for unsolvable points"),
    "grid.steps_p": _k("grid", "0", "int", "grid points along P"),
    "grid.steps_lambda": _k("grid", "1", "int", "grid points along lambda_b"),
    "grid.steps_split": _k("grid", "2", "int", "grid points along the split"),
    "grid.refine": _k("grid_refine", "", "int", "local refinement points per axis"),
}

for _f in fields(GaConfig):
    if _f.name not in ("seed", "jobs"):
        _kind = {int: "int", float: "float", str: "str"}.get(type(_f.default), "float")
        if _f.name == "stall_metric":
            _kind = "choice:best|spread"
        elif _f.name == "replacement":
            _kind = "choice:merge|generational"
        KEYS[f"ga.{_f.name}"] = _k("ga", _f.name, _kind, "genetic algorithm setting")

KEYS.update({
    "sim.side": _k("sim", "side", "opt_length", "torus side; 'auto' sizes from min_expected_bs"),
    "sim.replications": _k("sim", "replications", "int", "independent realizations"),
    "sim.min_expected_bs": _k("sim", "min_expected_bs", "float", "expected BSs per region"),
    "sim.delays": _k("sim", "delays", "bool", "measure delays"),
    "sim.harvest_cdf": _k("sim", "harvest_cdf", "bool", "measure the harvest CDF"),
    "sim.h_grid": _k("sim", "h_grid", "list_power", "extra harvest CDF points"),
    "sim.utilization": _k("sim", "utilization", "choice:solve|full", "per-BS utilization"),
    "sim.interference": _k("sim", "interference", "choice:mean|band", "reuse model"),
    "sim.user_power": _k("sim", "user_power", "choice:cog|exact", "uplink power model"),
    "sim.user_gain": _k("sim", "user_gain", "opt_ratio", "gain toward user transmissions"),
    "sim.estimator": _k("sim", "estimator", "choice:area|palm", "typical-user estimator"),
    "sim.max_redraws": _k("sim", "max_redraws", "int", "redraws of empty realizations"),
})


def key_table():
    """``(key, default unit, description)`` for every accepted key."""
    out = []
    for key, (_, _, kind, doc) in sorted(KEYS.items()):
        base = kind.split("_", 1)[1] if kind.startswith(("opt_", "list_")) else kind
        unit = _UNITS[base][0] if base in _UNITS else ""
        out.append((key, unit, doc))
    return out


# ---------------------------------------------------------------------------
# parsing


def parse_text(text: str, source: str = "<text>"):
    """Parse a scenario file body into an ordered ``{key: raw value}`` dict."""
    cp = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#",), comment_prefixes=("#",),
        default_section="\0", strict=True, empty_lines_in_values=False,
    )
    cp.optionxform = str
    try:
        cp.read_string("[\0top]\n" + text, source=source)
    except configparser.Error as exc:
        raise ConfigError([(source, str(exc).replace("\0top", "top level"))]) from None
    out = {}
    for sec in cp.sections():
        prefix = "" if sec == "\0top" else sec.strip() + "."
        for key, val in cp.items(sec):
            out[prefix + key.strip()] = val.strip()
    return out


def _read_presets():
    text = resources.files(__package__).joinpath("presets.cfg").read_text()
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                   default_section="\0")
    cp.optionxform = str
    cp.read_string(text)
    return {s: dict(cp.items(s)) for s in cp.sections()}


PRESETS = _read_presets()


def preset_names():
    return sorted(PRESETS)


def _set_path(obj, path, value):
    head, _, rest = path.partition(".")
    if not rest:
        return replace(obj, **{head: value})
    return replace(obj, **{head: _set_path(getattr(obj, head), rest, value)})


def _curve(settings, base):
    kind = settings.get("curve", "sigmoid" if isinstance(base, SigmoidCurve) else "linear")
    params = {k: v for k, v in settings.items() if k != "curve"}
    if kind == "linear":
        allowed = {"xi"}
        seed = base if isinstance(base, LinearCurve) else LinearCurve()
    else:
        allowed = {"h_max", "h_s", "chi", "iota"}
        seed = base if isinstance(base, SigmoidCurve) else SigmoidCurve()
    return replace(seed, **{k: v for k, v in params.items() if k in allowed})


def load_config(paths: Iterable[str] = (), presets: Iterable[str] = ("paper",),
                sets: Iterable[str] = (), base: Optional[RunConfig] = None,
                check: bool = True) -> RunConfig:
    """Build a RunConfig from presets, files and ``key=value`` strings.

    Raises
    ------
    ConfigError
        With every unknown key, bad value and scenario invariant violation.
    """
    raw = []            # (key, value, origin)
    problems = []
    for name in presets:
        if name not in PRESETS:
            problems.append((f"preset {name}", f"unknown preset; choose from {preset_names()}"))
            continue
        raw += [(k, v, f"preset {name}") for k, v in PRESETS[name].items()]
    for path in paths:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
            raw += [(k, v, path) for k, v in parse_text(text, path).items()]
        except OSError as exc:
            problems.append((str(path), f"cannot read: {exc.strerror}"))
        except ConfigError as exc:
            problems += exc.problems
    for item in sets:
        key, sep, val = item.partition("=")
        if not sep:
            problems.append((item, "expected key=value"))
            continue
        raw.append((key.strip(), val.strip(), "--set"))

    parsed = {}
    for key, val, origin in raw:
        if key not in KEYS:
            problems.append((key, f"unknown key (from {origin})"))
            continue
        try:
            parsed[key] = parse_value(val, KEYS[key][2])
        except (ValueError, OverflowError) as exc:
            problems.append((key, f"{exc} (from {origin})"))
    return _build(parsed, base or RunConfig(), check, problems)


def _build(parsed, run, check, problems):
    scn, harvest = run.scenario, {}
    groups = {"ga": {}, "sim": {}, "fitness": {}}
    steps = list(run.grid_steps)
    refine = run.grid_refine
    for key, value in parsed.items():
        group, attr, _, _ = KEYS[key]
        if group == "scenario":
            scn = _set_path(scn, attr, value)
        elif group == "harvest":
            harvest[attr] = value
        elif group == "grid":
            steps[int(attr)] = value
        elif group == "grid_refine":
            refine = value
        else:
            groups[group][attr] = value
    if harvest:
        scn = replace(scn, harvest=_curve(harvest, scn.harvest))
    try:
        ga = replace(run.ga, **groups["ga"])
    except ValueError as exc:
        problems.append(("ga", str(exc)))
        ga = run.ga
    sim = replace(run.sim, **groups["sim"])
    if sim.replications < 2:
        problems.append(("sim.replications", "need at least 2"))
    if min(steps) < 2:
        problems.append(("grid", "need at least 2 points per axis"))
    if check:
        try:
            validate(scn)
        except ValidationError as exc:
            problems = problems + list(exc.problems)
    if problems:
        raise ConfigError(problems)
    return RunConfig(scn, ga, sim, replace(run.fitness, **groups["fitness"]),
                     tuple(steps), refine)
