"""
Analytic performance model: capacity, mean interference, the H operator,
the downlink interference fixed point, mean uplink user power and the
maximally fair downlink weight.

Radial integrals use the Rayleigh substitution ``u = lambda_b pi r^2`` so the
serving-distance density becomes ``exp(-u) du``. In ``t = ln u`` the integrand
is smooth and a fixed composite Gauss-Legendre rule suffices; because the
cell-mass kernel is scale invariant the kernel values at those nodes do not
depend on ``lambda_b`` and are computed once per process.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import integrate

from .core import ScenarioConfig
from .geometry import QuadratureError, build_kernel_table, f_of_r, unit_kernel

log = logging.getLogger(__name__)

__all__ = [
    "NonConvergence",
    "DivergenceError",
    "PerformanceReport",
    "RadialRule",
    "capacity",
    "mean_interference",
    "mean_user_power",
    "h_operator",
    "solve_downlink_delay",
    "solve_uplink_delay",
    "fair_weight",
    "effective_w_d",
    "evaluate_performance",
]


class NonConvergence(ArithmeticError):
    """Fixed-point iteration failed; carries the last iterate and residual."""

    def __init__(self, message, last=float("nan"), residual=float("nan")):
        super().__init__(message)
        self.last = last
        self.residual = residual


class DivergenceError(NonConvergence):
    """A delay integral is infinite (zero capacity or zero weight)."""


@dataclass(frozen=True)
class PerformanceReport:
    tau_d: float          # BB downlink mean ideal per-bit delay [s/bit]
    tau_dI: float         # IoT downlink [s/bit]
    tau_u: float          # BB uplink [s/bit]
    tau_uI: float         # IoT uplink [s/bit]
    util_d: float         # tau_d / tau_d0, uncapped
    util_u: float         # tau_u / tau_u0, uncapped
    o_bar: float          # mean received user power [W]
    w_d: float            # downlink BB weight actually used
    iterations: int
    converged: bool
    residual: float


# ---------------------------------------------------------------------------
# radial quadrature rule


@dataclass(frozen=True)
class RadialRule:
    """Nodes ``u`` and weights for ``int_0^umax h(u) exp(-u) du``, together
    with the unit-density kernel at each node."""

    u: np.ndarray
    w: np.ndarray          # already includes exp(-u) and the ln-u Jacobian
    jt: np.ndarray         # Jt(sqrt(u / pi))


@lru_cache(maxsize=8)
def radial_rule(u_max: float = 40.0, panels: int = 16, order: int = 8, u_min: float = 1e-10) -> RadialRule:
    x, wx = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(math.log(u_min), math.log(u_max), panels + 1)
    t = np.concatenate([0.5 * (b - a) * x + 0.5 * (a + b) for a, b in zip(edges[:-1], edges[1:])])
    wt = np.concatenate([0.5 * (b - a) * wx for a, b in zip(edges[:-1], edges[1:])])
    u = np.exp(t)
    w = wt * u * np.exp(-u)
    jt = unit_kernel(np.sqrt(u / math.pi))
    for arr in (u, w, jt):
        arr.flags.writeable = False
    return RadialRule(u, w, jt)


def _rule_for(scn: ScenarioConfig) -> RadialRule:
    return radial_rule(float(scn.numerics.tail_mass))


def _radii(scn: ScenarioConfig, rule: RadialRule):
    return np.sqrt(rule.u / (scn.population.lambda_b * math.pi))


# ---------------------------------------------------------------------------
# elementary models


def capacity(r, P, gain, I, radio):
    """Shannon rate on one reuse band [bit/s]."""
    r = np.asarray(r, dtype=float)
    bw = radio.bandwidth / radio.reuse
    snr = P * gain * r ** (-radio.alpha) / (radio.noise_power + np.asarray(I, dtype=float))
    out = bw * np.log2(1.0 + snr)
    return float(out) if np.ndim(out) == 0 else out


def mean_interference(r, scn: ScenarioConfig, util_ratio: float, p_tx: float | None = None):
    """Mean interference on one band at distance ``r`` [W]."""
    rad = scn.radio
    P = rad.p_tx if p_tx is None else p_tx
    r = np.asarray(r, dtype=float)
    out = (P * rad.mean_gain * scn.population.lambda_b * 2 * math.pi * r ** (2 - rad.alpha)
           / (rad.reuse * (rad.alpha - 2)) * util_ratio)
    return float(out) if np.ndim(out) == 0 else out


def mean_user_power(scn: ScenarioConfig, uplink_util: float) -> float:
    """Mean power received from transmitting UEs [W]."""
    pop, sch, a = scn.population, scn.scheduling, scn.radio.alpha
    g, phi, du = pop.iot_fraction, pop.duty_cycle, sch.delta_u
    num = (1 - g) * du * sch.p_bb + phi * g * sch.p_iot
    den = (1 - g) * du + phi * g
    return num / den * pop.lambda_b * math.pi * a / (a - 2) * uplink_util


def fair_weight(scn: ScenarioConfig) -> float:
    """Maximally fair BB downlink weight for the active receiver mode."""
    dd = scn.scheduling.delta_d
    m = scn.mode
    if m.kind == "ts":
        return dd * (1.0 - m.split)
    rad = scn.radio
    nu = m.split
    rbar = 0.5 / math.sqrt(scn.population.lambda_b)
    ibar = mean_interference(rbar, scn, 1.0)
    sig = rad.p_tx * rad.gain * rbar ** (-rad.alpha)
    n0 = rad.noise_power
    full = math.log2(1 + sig / (n0 + ibar))
    part = math.log2(1 + (1 - nu) * sig / (n0 + (1 - nu) * ibar))
    return dd * part / full


def effective_w_d(scn: ScenarioConfig) -> float:
    w = scn.scheduling.w_d
    return fair_weight(scn) if w is None else float(w)


# ---------------------------------------------------------------------------
# H operator


def _population_factor(scn, y):
    pop = scn.population
    return f_of_r(pop.lambda_u, pop.iot_fraction, pop.duty_cycle, y, 1.0) / pop.lambda_b


def h_operator(y, z, g, scn: ScenarioConfig, method: str = "fast"):
    """``H(y, z, g) = int f(r, y) rho(r) / (z g(r)) dr`` [s/bit].

    ``g`` maps an array of radii to rates. ``method='adaptive'`` integrates
    with adaptive quadrature over the tabulated kernel instead of the fixed
    rule; it is slower and intended for cross-checks.
    """
    if z <= 0 or y < 0:
        raise DivergenceError(f"H undefined for weights y={y!r}, z={z!r}")
    pref = _population_factor(scn, y)
    lam = scn.population.lambda_b
    if method == "fast":
        rule = _rule_for(scn)
        rates = np.asarray(g(_radii(scn, rule)), dtype=float)
        if np.any(rates <= 0) or not np.all(np.isfinite(rates)):
            raise DivergenceError("rate vanishes on the support")
        return float(pref * np.sum(rule.w * rule.jt / rates) / z)
    if method != "adaptive":
        raise ValueError(f"unknown method {method!r}")
    table = build_kernel_table(lam)

    def integrand(t):
        u = math.exp(t)
        r = math.sqrt(u / (lam * math.pi))
        rate = float(g(np.array([r]))[0])
        if rate <= 0:
            raise DivergenceError("rate vanishes on the support")
        return table(r) * lam * u * math.exp(-u) / rate

    tol = scn.numerics.quad_rel_tol
    with warnings.catch_warnings():
        # the error estimate is checked below instead
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(integrand, math.log(1e-12), math.log(scn.numerics.tail_mass),
                                  epsabs=0.0, epsrel=tol, limit=400)
    if not math.isfinite(val) or err > 100 * tol * abs(val):
        raise QuadratureError(f"H quadrature error {err:g} on {val:g}")
    return pref * val / z


# ---------------------------------------------------------------------------
# delays


def _downlink_map(scn, w_d, method="fast"):
    rad = scn.radio
    tau0 = scn.qos.tau_d0
    if method == "fast":
        # same sum as h_operator, with the tau-independent factors hoisted
        rule = _rule_for(scn)
        r = _radii(scn, rule)
        sig = rad.p_tx * rad.gain * r ** (-rad.alpha)
        icoef = mean_interference(r, scn, 1.0 / tau0)
        wj = rule.w * rule.jt * (_population_factor(scn, w_d) / w_d)
        bw = rad.bandwidth / rad.reuse
        n0 = rad.noise_power

        def T(tau):
            rate = bw * np.log2(1.0 + sig / (n0 + icoef * tau))
            if not np.all(rate > 0):
                raise DivergenceError("rate vanishes on the support")
            return float(np.sum(wj / rate))
        return T

    def T(tau):
        util = tau / tau0
        return h_operator(w_d, w_d,
                          lambda r: capacity(r, rad.p_tx, rad.gain, mean_interference(r, scn, util), rad),
                          scn, method)
    return T


def solve_downlink_delay(scn: ScenarioConfig, w_d: float | None = None, method: str = "fast"):
    """Solve the BB downlink fixed point; return ``(tau_d, tau_dI, iterations)``."""
    tau_d, iters, _ = _downlink_fixed_point(scn, w_d, method)
    w = effective_w_d(scn) if w_d is None else w_d
    return tau_d, _iot_downlink(scn, tau_d, w, method), iters


def _downlink_fixed_point(scn, w_d=None, method="fast"):
    w = effective_w_d(scn) if w_d is None else w_d
    if w <= 0:
        raise DivergenceError("downlink weight is zero")
    num = scn.numerics
    tau0 = scn.qos.tau_d0
    tol = num.fp_tol * tau0
    T = _downlink_map(scn, w, method)
    lam = num.fp_damping
    guard = 1e6 * tau0
    tau = T(0.0)
    hist = []
    for it in range(1, num.fp_max_iter + 1):
        t_new = T(tau)
        if not math.isfinite(t_new) or t_new > guard:
            raise NonConvergence("downlink delay diverged", tau, float("inf"))
        resid = abs(t_new - tau)
        if resid < tol:
            return t_new, it, abs(T(t_new) - t_new)
        nxt = (1 - lam) * tau + lam * t_new
        if num.aitken:
            hist.append(nxt)
            if len(hist) >= 3:
                x0, x1, x2 = hist[-3:]
                den = x2 - 2 * x1 + x0
                if den != 0:
                    acc = x2 - (x2 - x1) ** 2 / den
                    if acc > 0 and math.isfinite(acc):
                        nxt = acc
                        hist.clear()
        tau = nxt
    raise NonConvergence(f"no convergence in {num.fp_max_iter} iterations", tau, resid)


def _iot_downlink(scn, tau_d, w_d, method="fast"):
    m = scn.mode
    if m.kind == "ts":
        if m.split >= 1:
            raise DivergenceError("TS split 1 leaves no time for data")
        return tau_d * w_d / (1 - m.split)
    rad = scn.radio
    nu = m.split
    util = tau_d / scn.qos.tau_d0
    return h_operator(
        w_d, 1.0,
        lambda r: capacity(r, (1 - nu) * rad.p_tx, rad.gain,
                           (1 - nu) * mean_interference(r, scn, util), rad),
        scn, method)


def solve_uplink_delay(scn: ScenarioConfig, method: str = "fast"):
    """Return ``(tau_u, tau_uI)``; the uplink is interference free."""
    rad, du = scn.radio, scn.scheduling.delta_u
    tau_u = h_operator(du, du, lambda r: capacity(r, scn.scheduling.p_iot, 1.0, 0.0, rad), scn, method)
    return tau_u, du * tau_u


def evaluate_performance(scn: ScenarioConfig, method: str = "fast") -> PerformanceReport:
    """Solve every mean delay and the mean user power for ``scn``.

    Raises ``NonConvergence`` (or its ``DivergenceError`` subclass).
    """
    w = effective_w_d(scn)
    tau_d, iters, resid = _downlink_fixed_point(scn, w, method)
    tau_dI = _iot_downlink(scn, tau_d, w, method)
    tau_u, tau_uI = solve_uplink_delay(scn, method)
    util_u = tau_u / scn.qos.tau_u0
    return PerformanceReport(
        tau_d=tau_d, tau_dI=tau_dI, tau_u=tau_u, tau_uI=tau_uI,
        util_d=tau_d / scn.qos.tau_d0, util_u=util_u,
        o_bar=mean_user_power(scn, min(util_u, 1.0)),
        w_d=w, iterations=iters, converged=True, residual=resid,
    )


def with_w_d(scn: ScenarioConfig, w_d) -> ScenarioConfig:
    return replace(scn, scheduling=replace(scn.scheduling, w_d=w_d))
