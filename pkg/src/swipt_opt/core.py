"""
Domain types, validation and small shared models.

All quantities are SI (W, m, s, Hz, m^-2). Convenience units such as mW or
km^-2 are accepted only by the configuration parser and converted there.

Types
-----
EhMode, RadioParams, PopulationParams, SchedulingParams, QosTargets,
BsEnergyModel, LinearCurve, SigmoidCurve, HarvestSources, NumericsConfig,
ScenarioConfig, DecisionVector
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, is_dataclass, replace
from typing import Optional, Union

import numpy as np

__all__ = [
    "EH_MODES",
    "EhMode",
    "RadioParams",
    "PopulationParams",
    "SchedulingParams",
    "QosTargets",
    "BsEnergyModel",
    "LinearCurve",
    "SigmoidCurve",
    "HarvestSources",
    "NumericsConfig",
    "ScenarioConfig",
    "DecisionVector",
    "ValidationError",
    "validate",
    "bs_power",
    "theta",
    "with_decision",
]

EH_MODES = ("ts", "sps", "dps")


class ValidationError(ValueError):
    """Raised when a scenario violates one or more invariants.

    ``problems`` holds ``(field_path, message)`` pairs, one per violation.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        text = "; ".join(f"{path}: {msg}" for path, msg in self.problems)
        super().__init__(text or "invalid scenario")


@dataclass(frozen=True)
class EhMode:
    """Receiver architecture and its split factor.

    ``kind`` is one of ``ts`` (time switching, split = eta), ``sps`` (static
    power splitting, split = nu) or ``dps`` (dynamic power splitting).
    """

    kind: str = "ts"
    split: float = 0.5

    @property
    def is_power_split(self) -> bool:
        return self.kind in ("sps", "dps")


@dataclass(frozen=True)
class RadioParams:
    bandwidth: float = 50e6          # B [Hz]
    reuse: int = 3                   # k
    n0: float = 10 ** (-174 / 10) * 1e-3   # noise psd [W/Hz], -174 dBm/Hz
    noise_raw: bool = False          # use n0 verbatim as a power instead of n0*B/k
    alpha: float = 3.0
    p_tx: float = 6.0                # BS transmit power P [W]
    p_min: float = 1.0
    p_max: float = 11.0
    gain: float = 10.0               # main-lobe gain G (linear)
    aperture_deg: float = 45.0       # main-lobe aperture a [deg]
    side_lobe_override: Optional[float] = None   # direct L, bypasses the G/a relation

    @property
    def side_lobe_loss(self) -> float:
        """Side-lobe gain L, from the G/a relation unless overridden."""
        if self.side_lobe_override is not None:
            return float(self.side_lobe_override)
        a = self.aperture_deg
        return 1.0 - (self.gain - 1.0) * a / (360.0 - a)

    @property
    def mean_gain(self) -> float:
        """Angle-averaged gain L_g seen by a user the BS is not serving."""
        a = self.aperture_deg
        return (self.gain * a + self.side_lobe_loss * (360.0 - a)) / 360.0

    @property
    def noise_power(self) -> float:
        if self.noise_raw:
            return self.n0
        return self.n0 * self.bandwidth / self.reuse


@dataclass(frozen=True)
class PopulationParams:
    lambda_u: float = 1e-2           # users / m^2
    lambda_b: float = 1e-4           # BSs / m^2
    iot_fraction: float = 0.8        # gamma
    duty_cycle: float = 1.0          # phi
    min_users_per_bs: float = 5.0    # m_min
    lambda_b_min: float = 1e-6
    lambda_b_max: float = 1e-2

    @property
    def lambda_b_cap(self) -> float:
        """Largest BS density allowed by both C5 and the users-per-BS floor."""
        cap = self.lambda_b_max
        if self.min_users_per_bs > 0:
            cap = min(cap, self.lambda_u / self.min_users_per_bs)
        return cap


@dataclass(frozen=True)
class SchedulingParams:
    delta_d: float = 100.0           # BB:IoT downlink ratio (target delay ratio)
    delta_u: float = 1.0
    w_d: Optional[float] = None      # None -> maximally fair weight for the mode
    p_bb: float = 0.2                # UE transmit powers [W]
    p_iot: float = 0.2


@dataclass(frozen=True)
class QosTargets:
    tau_d0: float = 1e-5             # s/bit
    tau_u0: float = 1e-4             # s/bit
    h0: float = 1e-3                 # W
    mu: float = 0.05


@dataclass(frozen=True)
class BsEnergyModel:
    q1: float = 1100.0
    q2: float = 100.0
    q3: float = 30.0


@dataclass(frozen=True)
class LinearCurve:
    xi: float = 0.9

    def __call__(self, h_in):
        return self.xi * np.asarray(h_in, dtype=float)


@dataclass(frozen=True)
class SigmoidCurve:
    """Normalised logistic harvester.

    ``chi`` is in 1/W. The output is exactly zero at the sensitivity
    threshold ``h_s`` and saturates at ``h_max``.
    """

    h_max: float = 10e-3
    h_s: float = 0.064e-3
    chi: float = 274.0
    iota: float = 0.9

    def __call__(self, h_in):
        h_in = np.asarray(h_in, dtype=float)
        e_s = math.exp(-self.chi * self.h_s + self.iota)
        # exp overflow for very negative inputs only ever drives the output to 0
        with np.errstate(over="ignore"):
            e_in = np.exp(-self.chi * h_in + self.iota)
        out = self.h_max / e_s * ((1.0 + e_s) / (1.0 + e_in) - 1.0)
        return np.maximum(out, 0.0)


HarvestCurve = Union[LinearCurve, SigmoidCurve]


@dataclass(frozen=True)
class HarvestSources:
    """Which received-power contributions an IoT harvester can use.

    Active charging by the serving BS is always on. ``serving_passive`` is the
    out-of-service power of the serving BS, ``other_bs`` the power of all other
    BSs, ``users`` the uplink power of other UEs.
    """

    serving_passive: bool = True
    other_bs: bool = True
    users: bool = True


@dataclass(frozen=True)
class NumericsConfig:
    quad_rel_tol: float = 1e-6
    tail_mass: float = 40.0          # truncate where lambda_b*pi*r^2 exceeds this
    fp_tol: float = 1e-9             # fixed-point tolerance, relative to tau_d0
    fp_damping: float = 0.5
    fp_max_iter: int = 200
    aitken: bool = False
    cdf_verbatim: bool = False       # CDF_r(g^-1(h0)) literally instead of the level set


@dataclass(frozen=True)
class ScenarioConfig:
    radio: RadioParams = field(default_factory=RadioParams)
    population: PopulationParams = field(default_factory=PopulationParams)
    scheduling: SchedulingParams = field(default_factory=SchedulingParams)
    qos: QosTargets = field(default_factory=QosTargets)
    energy: BsEnergyModel = field(default_factory=BsEnergyModel)
    harvest: HarvestCurve = field(default_factory=LinearCurve)
    sources: HarvestSources = field(default_factory=HarvestSources)
    mode: EhMode = field(default_factory=EhMode)
    numerics: NumericsConfig = field(default_factory=NumericsConfig)


@dataclass(frozen=True)
class DecisionVector:
    p_tx: float
    lambda_b: float
    split: float

    def as_tuple(self):
        return (self.p_tx, self.lambda_b, self.split)


def with_decision(scn: ScenarioConfig, dv: DecisionVector) -> ScenarioConfig:
    """Return ``scn`` with transmit power, BS density and split replaced."""
    return replace(
        scn,
        radio=replace(scn.radio, p_tx=float(dv.p_tx)),
        population=replace(scn.population, lambda_b=float(dv.lambda_b)),
        mode=replace(scn.mode, split=float(dv.split)),
    )


def decision_of(scn: ScenarioConfig) -> DecisionVector:
    return DecisionVector(scn.radio.p_tx, scn.population.lambda_b, scn.mode.split)


def _check(problems, cond, path, msg):
    if not cond:
        problems.append((path, msg))


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    """Check every invariant of ``cfg``; return it unchanged if all hold.

    Raises
    ------
    ValidationError
        Listing every violation with its dotted field path.
    """
    p = []
    r = cfg.radio
    _check(p, r.alpha > 2, "radio.alpha", "path-loss exponent must exceed 2")
    _check(p, r.bandwidth > 0, "radio.bandwidth", "must be positive")
    _check(p, isinstance(r.reuse, (int, np.integer)) and r.reuse >= 1,
           "radio.reuse", "must be a positive integer")
    _check(p, r.n0 >= 0, "radio.n0", "must be nonnegative")
    _check(p, 0 < r.p_min <= r.p_max, "radio.p_min", "need 0 < p_min <= p_max")
    _check(p, r.p_min <= r.p_tx <= r.p_max, "radio.p_tx", "must lie in [p_min, p_max]")
    _check(p, r.gain >= 1, "radio.gain", "beamforming gain must be >= 1")
    _check(p, 0 < r.aperture_deg < 360, "radio.aperture_deg", "must lie in (0, 360)")
    if 0 < r.aperture_deg < 360 and r.side_lobe_loss < 0:
        src = "radio.L" if r.side_lobe_override is not None else "radio.gain/radio.aperture_deg"
        p.append((src, f"side-lobe loss L = {r.side_lobe_loss:.6g} is negative; "
                       "G and a are incompatible (set radio.L explicitly)"))

    u = cfg.population
    _check(p, u.lambda_u > 0, "population.lambda_u", "must be positive")
    _check(p, u.lambda_b > 0, "population.lambda_b", "must be positive")
    _check(p, 0 <= u.iot_fraction <= 1, "population.gamma", "must lie in [0, 1]")
    _check(p, 0 < u.duty_cycle <= 1, "population.phi", "must lie in (0, 1]")
    _check(p, u.min_users_per_bs >= 0, "population.m_min", "must be nonnegative")
    _check(p, 0 < u.lambda_b_min <= u.lambda_b_max, "population.lambda_b_min",
           "need 0 < lambda_b_min <= lambda_b_max")

    s = cfg.scheduling
    _check(p, s.delta_d > 0, "scheduling.delta_d", "must be positive")
    _check(p, s.delta_u > 0, "scheduling.delta_u", "must be positive")
    _check(p, s.w_d is None or s.w_d > 0, "scheduling.w_d", "must be positive")
    _check(p, s.p_bb >= 0 and s.p_iot >= 0, "scheduling.p_bb", "UE powers must be nonnegative")

    q = cfg.qos
    _check(p, q.tau_d0 > 0, "qos.tau_d0", "must be positive")
    _check(p, q.tau_u0 > 0, "qos.tau_u0", "must be positive")
    _check(p, q.h0 > 0, "qos.h0", "must be positive")
    _check(p, 0 < q.mu < 1, "qos.mu", "must lie in (0, 1)")

    e = cfg.energy
    _check(p, min(e.q1, e.q2, e.q3) >= 0, "energy", "q1, q2, q3 must be nonnegative")

    h = cfg.harvest
    if isinstance(h, LinearCurve):
        _check(p, 0 < h.xi <= 1, "harvest.xi", "must lie in (0, 1]")
    elif isinstance(h, SigmoidCurve):
        _check(p, h.h_max > 0, "harvest.h_max", "must be positive")
        _check(p, h.h_s >= 0, "harvest.h_s", "must be nonnegative")
        _check(p, h.chi > 0, "harvest.chi", "must be positive")
    else:
        p.append(("harvest", f"unknown curve type {type(h).__name__}"))

    m = cfg.mode
    _check(p, m.kind in EH_MODES, "mode.kind", f"must be one of {EH_MODES}")
    _check(p, 0 <= m.split <= 1, "mode.split", "split factor must lie in [0, 1]")

    n = cfg.numerics
    _check(p, n.quad_rel_tol > 0, "numerics.quad_rel_tol", "must be positive")
    _check(p, n.tail_mass > 5, "numerics.tail_mass", "must exceed 5")
    _check(p, 0 < n.fp_damping <= 1, "numerics.fp_damping", "must lie in (0, 1]")
    _check(p, n.fp_max_iter >= 1, "numerics.fp_max_iter", "must be >= 1")

    if p:
        raise ValidationError(p)
    return cfg


def bs_power(model: BsEnergyModel, utilization: float, p_tx: float, p_min: float) -> float:
    """Power drawn by one BS at the given downlink utilization [W]."""
    if not 0.0 <= utilization <= 1.0:
        raise ValueError(f"utilization {utilization!r} outside [0, 1]")
    return model.q1 + utilization * (model.q2 + model.q3 * (p_tx - p_min))


def theta(curve: HarvestCurve, h_in):
    """Harvested power for received power ``h_in`` (scalar or array)."""
    out = curve(h_in)
    return float(out) if np.ndim(out) == 0 else out


def iter_leaf_fields(obj, prefix=""):
    """Yield ``(dotted_path, value)`` for every scalar field of a nested dataclass."""
    for f in fields(obj):
        val = getattr(obj, f.name)
        path = f"{prefix}{f.name}"
        if is_dataclass(val):
            yield from iter_leaf_fields(val, path + ".")
        else:
            yield path, val
