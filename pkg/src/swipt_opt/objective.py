"""
Network power objective, constraint slacks and the penalty fitness.

Objective values are network power per unit area in W/m^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .core import DecisionVector, ScenarioConfig, with_decision
from .geometry import QuadratureError
from .harvest import InfeasibleProfile, build_profile, cdf_h
from .perf import NonConvergence, PerformanceReport, evaluate_performance

__all__ = [
    "DecisionVector",
    "FitnessWeights",
    "FeasibilityReport",
    "Evaluation",
    "objective_value",
    "check_feasibility",
    "fitness",
    "evaluate",
    "penalty_scale",
]

FEAS_TOL = 1e-9
SLACK_KEYS = ("C1_dl", "C1_ul", "C2", "C3", "C4", "C5", "users_per_bs")


@dataclass(frozen=True)
class FitnessWeights:
    k1: float = 1000.0
    k2: float = 5000.0
    k3: float = 1000.0
    verbatim: bool = False           # literal -k2*(x)^- harvest term
    failure_factor: float = 1e6      # penalty for failed evaluations, times penalty_scale


@dataclass(frozen=True)
class FeasibilityReport:
    """Signed constraint slacks (<= 0 satisfied) and the objective [W/m^2]."""

    slacks: dict
    feasible: bool
    objective: float
    status: str = "ok"

    def violated(self):
        return [k for k, v in self.slacks.items() if not v <= FEAS_TOL]


@dataclass(frozen=True)
class Evaluation:
    """Everything computed for one decision."""

    scenario: ScenarioConfig
    perf: Optional[PerformanceReport]
    cdf_h: float
    feasibility: FeasibilityReport
    fitness: float
    extra: dict = field(default_factory=dict)

    @property
    def objective(self):
        return self.feasibility.objective


def penalty_scale(scn: ScenarioConfig) -> float:
    """Largest possible objective, ``lambda_b,max [q1 + q2 + q3 (P_max - P_min)]``."""
    e, r = scn.energy, scn.radio
    return scn.population.lambda_b_max * (e.q1 + e.q2 + e.q3 * (r.p_max - r.p_min))


def objective_value(scn: ScenarioConfig, perf: PerformanceReport | None = None) -> float:
    """Mean network power per unit area [W/m^2]; utilization is not capped."""
    if perf is None:
        perf = evaluate_performance(scn)
    e, r = scn.energy, scn.radio
    return scn.population.lambda_b * (e.q1 + perf.util_d * (e.q2 + e.q3 * (r.p_tx - r.p_min)))


def _box_slacks(scn):
    r, p, m = scn.radio, scn.population, scn.mode
    c2 = max(r.p_min - r.p_tx, r.p_tx - r.p_max)
    c3 = max(-m.split, m.split - 1.0)
    c5 = max(-p.lambda_b, p.lambda_b - p.lambda_b_max)
    upb = p.min_users_per_bs - p.lambda_u / p.lambda_b
    return c2, c3, c5, upb


def _report(scn, perf, cdf):
    c2, c3, c5, upb = _box_slacks(scn)
    if perf is None:
        slacks = dict(C1_dl=math.inf, C1_ul=math.inf, C2=c2, C3=c3, C4=math.inf, C5=c5,
                      users_per_bs=upb)
        return FeasibilityReport(slacks, False, math.nan, "nonconvergence")
    slacks = dict(C1_dl=perf.util_d - 1.0, C1_ul=perf.util_u - 1.0, C2=c2, C3=c3,
                  C4=cdf - scn.qos.mu, C5=c5, users_per_bs=upb)
    feas = all(v <= FEAS_TOL for v in slacks.values())
    return FeasibilityReport(slacks, feas, objective_value(scn, perf))


def evaluate(scn: ScenarioConfig, weights: FitnessWeights | None = None,
             decision: DecisionVector | None = None) -> Evaluation:
    """Solve the model at ``scn`` (optionally with ``decision`` applied) and
    score it. Never raises for numerical failure; such points get the
    failure penalty and status ``nonconvergence``."""
    w = weights or FitnessWeights()
    if decision is not None:
        scn = with_decision(scn, decision)
    try:
        perf = evaluate_performance(scn)
        cdf = cdf_h(build_profile(scn, perf), scn.qos.h0)
    except (NonConvergence, QuadratureError, InfeasibleProfile, FloatingPointError):
        rep = _report(scn, None, math.nan)
        return Evaluation(scn, None, math.nan, rep, w.failure_factor * penalty_scale(scn))
    rep = _report(scn, perf, cdf)
    return Evaluation(scn, perf, cdf, rep, _fitness_from(rep, perf, cdf, scn, w))


def _fitness_from(rep, perf, cdf, scn, w):
    q = scn.qos
    v = rep.objective
    v += w.k1 * max(perf.util_u - 1.0, 0.0)
    if w.verbatim:
        v += -w.k2 * min(cdf - q.mu, 0.0)
    else:
        v += w.k2 * max(cdf - q.mu, 0.0)
    v += w.k3 * max(perf.util_d - 1.0, 0.0)
    return v


def check_feasibility(scn: ScenarioConfig, perf: PerformanceReport | None = None) -> FeasibilityReport:
    """Constraint slacks at ``scn``; failure to solve is reported, not raised."""
    if perf is not None:
        return _report(scn, perf, cdf_h(build_profile(scn, perf), scn.qos.h0))
    return evaluate(scn).feasibility


def fitness(scn: ScenarioConfig, weights: FitnessWeights | None = None) -> float:
    """Penalty fitness (lower is better)."""
    return evaluate(scn, weights).fitness
