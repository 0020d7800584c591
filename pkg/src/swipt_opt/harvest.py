"""
Harvested-power model.

The received power of an IoT user at serving distance ``r`` is approximated by
``F(r) + Z(r) / f(r, w_d)`` where ``f`` is the mean weighted population of its
cell. ``F`` collects power received regardless of the user's own share of BS
time and ``Z`` the part that scales with that share. The harvest CDF is the
Rayleigh mass of the sublevel set ``{r : g(r) <= h_0}``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .core import EhMode, HarvestSources, RadioParams, ScenarioConfig
from .geometry import build_kernel_table, f_of_r
from .perf import PerformanceReport, evaluate_performance, mean_interference

__all__ = [
    "InfeasibleProfile",
    "HarvestProfile",
    "build_profile",
    "cdf_h",
    "pointwise_received_power",
]

_GRID = 512
_U_MIN = 1e-10


class InfeasibleProfile(ValueError):
    """The cell population vanishes, so the received-power share is undefined."""


@dataclass(frozen=True)
class HarvestProfile:
    """``F``, ``Z`` and ``g`` for one scenario at its solved operating point.

    ``util_d`` and ``util_u`` are the utilizations entering the model, capped
    at 1. Methods accept scalars or arrays of radii in metres.
    """

    scenario: ScenarioConfig
    w_d: float
    util_d: float
    util_u: float
    o_bar: float
    r_lo: float
    r_hi: float

    @property
    def _table(self):
        return build_kernel_table(self.scenario.population.lambda_b)

    def k_ibar(self, r):
        """Total mean power from non-serving BSs over all bands [W]."""
        s = self.scenario
        return s.radio.reuse * mean_interference(r, s, self.util_d)

    def _own(self, r):
        rad = self.scenario.radio
        return self.util_d * rad.p_tx * np.asarray(r, dtype=float) ** (-rad.alpha)

    def _ambient(self, r):
        src = self.scenario.sources
        return src.other_bs * self.k_ibar(r) + src.users * self.o_bar

    def F(self, r):
        rad, src, m = self.scenario.radio, self.scenario.sources, self.scenario.mode
        base = src.serving_passive * self._own(r) * rad.mean_gain + self._ambient(r)
        return m.split * base if m.kind == "sps" else base

    def Z(self, r):
        rad, src, m = self.scenario.radio, self.scenario.sources, self.scenario.mode
        lg = src.serving_passive * rad.mean_gain
        own = self._own(r)
        if m.kind == "ts":
            return own * (rad.gain * m.split - lg) - self.util_d * (1 - m.split) * self._ambient(r)
        if m.kind == "sps":
            return m.split * own * (rad.gain - lg)
        return own * (m.split * rad.gain - lg)

    def f(self, r):
        pop = self.scenario.population
        return f_of_r(pop.lambda_u, pop.iot_fraction, pop.duty_cycle, self.w_d, self._table(r))

    def received(self, r):
        """Mean received power before the harvesting curve, clamped at 0 [W]."""
        fr = self.f(r)
        if np.any(np.asarray(fr) <= 0):
            raise InfeasibleProfile("cell population is zero")
        return np.maximum(self.F(r) + self.Z(r) / fr, 0.0)

    def g(self, r):
        """Harvested power at serving distance ``r`` [W]."""
        out = self.scenario.harvest(self.received(r))
        return float(out) if np.ndim(out) == 0 else out

    def r_of_u(self, u):
        return np.sqrt(np.asarray(u, dtype=float) / (self.scenario.population.lambda_b * math.pi))


def build_profile(scn: ScenarioConfig, perf: PerformanceReport | None = None) -> HarvestProfile:
    """Assemble the harvest profile, solving the delays first if needed."""
    if perf is None:
        perf = evaluate_performance(scn)
    pop = scn.population
    if pop.lambda_u * (perf.w_d + pop.iot_fraction * (pop.duty_cycle - perf.w_d)) <= 0:
        raise InfeasibleProfile("f(r, w_d) vanishes identically")
    lam = pop.lambda_b
    return HarvestProfile(
        scenario=scn,
        w_d=perf.w_d,
        util_d=min(perf.util_d, 1.0),
        util_u=min(perf.util_u, 1.0),
        o_bar=perf.o_bar,
        r_lo=math.sqrt(_U_MIN / (lam * math.pi)),
        r_hi=math.sqrt(scn.numerics.tail_mass / (lam * math.pi)),
    )


def _grid(profile):
    u = np.geomspace(_U_MIN, profile.scenario.numerics.tail_mass, _GRID)
    return u, np.asarray(profile.g(profile.r_of_u(u)), dtype=float)


def is_decreasing(profile) -> bool:
    _, gv = _grid(profile)
    return bool(np.all(np.diff(gv) <= 0))


def _crossing(profile, h0, ua, ub):
    fn = lambda lu: profile.g(profile.r_of_u(math.exp(lu))) - h0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return math.exp(optimize.brentq(fn, math.log(ua), math.log(ub), xtol=1e-13, rtol=1e-13))


def cdf_h(profile: HarvestProfile, h0: float, method: str = "auto") -> float:
    """Probability that a typical IoT user harvests at most ``h0`` watts.

    ``method``: ``auto`` (level set, or the inverse when ``g`` decreases),
    ``levelset``, ``inverse`` or ``verbatim`` (``CDF_r(g^-1(h0))`` literally,
    for reproduction audits; requires decreasing ``g``).
    """
    if h0 < 0:
        raise ValueError("h0 must be nonnegative")
    if profile.scenario.numerics.cdf_verbatim and method == "auto":
        method = "verbatim"
    u, gv = _grid(profile)
    below = gv <= h0
    if below.all():
        return 1.0
    if not below.any():
        return 0.0
    decreasing = bool(np.all(np.diff(gv) <= 0))
    if method == "auto":
        method = "inverse" if decreasing else "levelset"
    if method in ("inverse", "verbatim"):
        if not decreasing:
            raise ValueError("inverse form needs g decreasing on the support")
        i = int(np.argmax(below))
        ustar = _crossing(profile, h0, u[i - 1], u[i])
        return float(-math.expm1(-ustar)) if method == "verbatim" else math.exp(-ustar)
    if method != "levelset":
        raise ValueError(f"unknown method {method!r}")
    # sublevel intervals in u; ends beyond the grid inherit the end state
    edges = [0.0]
    for i in np.nonzero(below[1:] != below[:-1])[0]:
        edges.append(_crossing(profile, h0, u[i], u[i + 1]))
    edges.append(math.inf)
    state = bool(below[0])
    mass = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if state:
            mass += math.exp(-a) - (0.0 if math.isinf(b) else math.exp(-b))
        state = not state
    return float(min(max(mass, 0.0), 1.0))


def pointwise_received_power(mode: EhMode, D, U_d, K, I, O, radio: RadioParams,
                             sources: HarvestSources | None = None):
    """Received power of one IoT user from its local state, clamped at 0 [W].

    ``D`` serving distance, ``U_d`` serving-BS utilization, ``K`` the user's
    share of BS time, ``I`` total power from other BSs, ``O`` power from UEs.
    """
    src = sources or HarvestSources()
    D, U_d, K = (np.asarray(v, dtype=float) for v in (D, U_d, K))
    own = radio.p_tx * D ** (-radio.alpha) * U_d
    lg = src.serving_passive * radio.mean_gain
    amb = src.other_bs * np.asarray(I, dtype=float) + src.users * np.asarray(O, dtype=float)
    e, G = mode.split, radio.gain
    if mode.kind == "ts":
        h = own * (G * e * K + lg * (1 - K)) + (1 - K * U_d * (1 - e)) * amb
    elif mode.kind == "sps":
        h = e * own * (G * K + lg * (1 - K)) + e * amb
    elif mode.kind == "dps":
        h = own * (G * e * K + lg * (1 - K)) + amb
    else:
        raise ValueError(f"unknown mode {mode.kind!r}")
    h = np.maximum(h, 0.0)
    return float(h) if h.ndim == 0 else h
