"""
Genetic algorithm and grid-search baseline for the network-power problem.

The GA works on genotypes in the unit cube. For the network problem gene 0
maps linearly onto ``[P_min, P_max]``, gene 1 logarithmically onto
``[lambda_b_min, cap]`` with ``cap = min(lambda_b_max, lambda_u / m_min)``, and
gene 2 linearly onto the split factor in ``[0, 1]``. Decoding keeps every
individual inside the box, so box constraints never need penalties.

Randomness for generation ``g`` comes from ``numpy.random.default_rng([seed, g])``
and fitness values are stored by population index, which makes a run
independent of the number of worker processes.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import DecisionVector, ScenarioConfig
from .objective import Evaluation, FeasibilityReport, FitnessWeights, evaluate

log = logging.getLogger(__name__)

__all__ = [
    "GaConfig",
    "GaRun",
    "OptimizationResult",
    "ga_minimize",
    "ga_optimize",
    "grid_search",
    "grid_gap",
    "complexity_probe",
    "decode",
    "encode",
    "sus_select",
    "rank_expectation",
]


@dataclass(frozen=True)
class GaConfig:
    pop_size: int = 100
    max_gen: int = 150
    stall_gens: int = 10
    stall_tol: float = 1e-6
    stall_metric: str = "spread"      # "spread": population fitness std; "best": best fitness
    ratio: float = 1.9                # heuristic crossover ratio
    crossover_fraction: float = 0.8   # share of children made by crossover, the rest by mutation
    replacement: str = "merge"        # "merge": offspring replace the least fit; "generational"
    sigma_start: float = 0.1          # mutation std, fraction of box width
    sigma_end: float = 0.01
    sigma_decades: float = 2.0        # per-child std drawn log-uniformly down to 10^-decades of the schedule
    elite: int = 1
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.pop_size < 2 or self.max_gen < 1 or self.ratio <= 0:
            raise ValueError("need pop_size >= 2, max_gen >= 1, ratio > 0")
        if not 0 <= self.elite < self.pop_size:
            raise ValueError("elite must lie in [0, pop_size)")
        if self.replacement not in ("merge", "generational"):
            raise ValueError("replacement must be 'merge' or 'generational'")
        if self.stall_metric not in ("best", "spread"):
            raise ValueError("stall_metric must be 'best' or 'spread'")


@dataclass
class GaRun:
    """Raw GA outcome in genotype space."""

    best_x: np.ndarray
    best_f: float
    generations: int
    evals: int
    best_trace: list
    mean_trace: list
    spread_trace: list
    termination: str


@dataclass
class OptimizationResult:
    best: DecisionVector
    fitness: float
    objective: float
    feasibility: FeasibilityReport
    generations: int
    evals: int
    best_trace: list = field(default_factory=list)
    mean_trace: list = field(default_factory=list)
    termination: str = "maxGen"
    evaluation: Optional[Evaluation] = None
    wall_time: float = 0.0


# ---------------------------------------------------------------------------
# operators


def rank_expectation(f):
    """Linear rank scaling: the best individual gets ``n``, the worst ``1``."""
    f = np.asarray(f, dtype=float)
    order = np.argsort(f, kind="stable")
    e = np.empty(len(f))
    e[order] = np.arange(len(f), 0, -1, dtype=float)
    return e


def sus_select(expectation, n_select, rng):
    """Stochastic uniform selection: equally spaced pointers on the wheel."""
    cum = np.cumsum(expectation)
    step = cum[-1] / n_select
    ptrs = rng.uniform(0, step) + step * np.arange(n_select)
    return np.minimum(np.searchsorted(cum, ptrs, side="right"), len(cum) - 1)


def _stalled(best, spread, cfg):
    i = cfg.stall_gens
    if len(best) <= i:
        return False
    w = 0.5 ** np.arange(i)[::-1]
    if cfg.stall_metric == "best":
        b = np.asarray(best[-i - 1:])
        denom = np.maximum(np.abs(b[1:]), 1e-300)
        change = np.abs(np.diff(b)) / denom
    else:
        # spread changes are measured against the fitness scale once the spread is small
        s = np.asarray(spread[-i - 1:])
        b = np.abs(np.asarray(best[-i:]))
        denom = np.maximum(np.maximum(np.abs(s[:-1]), b), 1e-300)
        change = np.abs(np.diff(s)) / denom
    avg = float(np.sum(w * change) / np.sum(w))
    return avg < cfg.stall_tol and spread[-1] <= np.mean(spread[-i - 1:-1])


def _evaluate_all(func, xs, pool):
    if pool is None:
        return np.array([func(x) for x in xs], dtype=float)
    return np.array(list(pool.map(func, list(xs), chunksize=max(1, len(xs) // 16))), dtype=float)


def ga_minimize(func: Callable, dim: int, cfg: GaConfig, init=None, mutate: bool = True) -> GaRun:
    """Minimize ``func`` over ``[0, 1]^dim``.

    ``init`` optionally fixes the first population. ``mutate=False`` disables
    mutation children and noise, leaving selection and crossover only.
    """
    n = cfg.pop_size
    rng = np.random.default_rng([cfg.seed, 0])
    pop = rng.random((n, dim)) if init is None else np.clip(np.array(init, dtype=float), 0, 1)
    pool = ProcessPoolExecutor(cfg.jobs) if cfg.jobs > 1 else None
    try:
        fit = _evaluate_all(func, pop, pool)
        evals = n
        best_tr, mean_tr, spread_tr = [], [], []
        best_x, best_f = None, math.inf
        term = "maxGen"
        gen = 1
        while True:
            k = int(np.argmin(fit))
            if fit[k] < best_f:
                best_f, best_x = float(fit[k]), pop[k].copy()
            best_tr.append(best_f)
            finite = fit[np.isfinite(fit)]
            mean_tr.append(float(finite.mean()) if finite.size else math.inf)
            spread_tr.append(float(finite.std()) if finite.size else math.inf)
            if _stalled(best_tr, spread_tr, cfg):
                term = "stall"
                break
            if gen >= cfg.max_gen:
                break
            rng = np.random.default_rng([cfg.seed, gen])
            frac = (gen - 1) / max(cfg.max_gen - 1, 1)
            sigma = cfg.sigma_start + (cfg.sigma_end - cfg.sigma_start) * frac
            order = np.argsort(fit, kind="stable")
            elites = pop[order[:cfg.elite]]
            n_kids = n - cfg.elite
            n_x = int(round(cfg.crossover_fraction * n_kids)) if mutate else n_kids
            n_m = n_kids - n_x
            parents = sus_select(rank_expectation(fit), 2 * n_x + n_m, rng)
            rng.shuffle(parents)
            a, b = parents[:n_x], parents[n_x:2 * n_x]
            better = np.where((fit[a] <= fit[b])[:, None], pop[a], pop[b])
            worse = np.where((fit[a] <= fit[b])[:, None], pop[b], pop[a])
            kids_x = worse + cfg.ratio * (better - worse)
            scale = sigma * 10.0 ** (-cfg.sigma_decades * rng.random((n_m, 1)))
            kids_m = pop[parents[2 * n_x:]] + scale * rng.standard_normal((n_m, dim))
            kids = np.clip(np.vstack([kids_x, kids_m]), 0.0, 1.0)
            new_fit = _evaluate_all(func, kids, pool)
            evals += len(kids)
            if cfg.replacement == "merge":
                allp = np.vstack([pop, kids])
                allf = np.concatenate([fit, new_fit])
                keep = np.argsort(allf, kind="stable")[:n]
                pop, fit = allp[keep], allf[keep]
            else:
                pop = np.vstack([elites, kids])
                fit = np.concatenate([fit[order[:cfg.elite]], new_fit])
            gen += 1
    finally:
        if pool is not None:
            pool.shutdown()
    return GaRun(best_x, best_f, gen, evals, best_tr, mean_tr, spread_tr, term)


# ---------------------------------------------------------------------------
# network problem


def lambda_bounds(scn: ScenarioConfig):
    p = scn.population
    hi = p.lambda_b_cap
    lo = min(p.lambda_b_min, hi)
    return lo, hi


def decode(scn: ScenarioConfig, x) -> DecisionVector:
    r = scn.radio
    lo, hi = lambda_bounds(scn)
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    P = r.p_min + x[0] * (r.p_max - r.p_min)
    lam = math.exp(math.log(lo) + x[1] * (math.log(hi) - math.log(lo)))
    return DecisionVector(float(P), float(min(max(lam, lo), hi)), float(x[2]))


def encode(scn: ScenarioConfig, dv: DecisionVector):
    r = scn.radio
    lo, hi = lambda_bounds(scn)
    g0 = (dv.p_tx - r.p_min) / (r.p_max - r.p_min) if r.p_max > r.p_min else 0.0
    g1 = (math.log(dv.lambda_b) - math.log(lo)) / (math.log(hi) - math.log(lo)) if hi > lo else 0.0
    return np.clip(np.array([g0, g1, dv.split]), 0.0, 1.0)


class _NetworkFitness:
    """Picklable genotype -> fitness map."""

    def __init__(self, scn, weights):
        self.scn, self.weights = scn, weights

    def __call__(self, x):
        return evaluate(self.scn, self.weights, decode(self.scn, x)).fitness


def _result(scn, weights, dv, **kw):
    ev = evaluate(scn, weights, dv)
    return OptimizationResult(best=dv, fitness=ev.fitness, objective=ev.objective,
                              feasibility=ev.feasibility, evaluation=ev, **kw)


def ga_optimize(scn: ScenarioConfig, ga: GaConfig | None = None,
                weights: FitnessWeights | None = None) -> OptimizationResult:
    """Run the GA on the network problem."""
    ga = ga or GaConfig()
    weights = weights or FitnessWeights()
    t0 = time.perf_counter()
    run = ga_minimize(_NetworkFitness(scn, weights), 3, ga)
    wall = time.perf_counter() - t0
    log.info("GA finished after %d generations (%s), %d evals", run.generations, run.termination, run.evals)
    return _result(scn, weights, decode(scn, run.best_x), generations=run.generations,
                   evals=run.evals, best_trace=run.best_trace, mean_trace=run.mean_trace,
                   termination=run.termination, wall_time=wall)


def grid_axes(scn: ScenarioConfig, steps):
    nP, nL, nS = steps
    if min(steps) < 2:
        raise ValueError("need at least 2 steps per axis")
    r = scn.radio
    lo, hi = lambda_bounds(scn)
    return (np.linspace(r.p_min, r.p_max, nP), np.geomspace(lo, hi, nL), np.linspace(0.0, 1.0, nS))


def _best_of(evals):
    feas = [e for e in evals if e[1].feasibility.feasible]
    if feas:
        return min(feas, key=lambda e: e[1].objective)
    return min(evals, key=lambda e: e[1].fitness)


def _evaluate_points(scn, weights, dvs, jobs):
    fn = _DecisionEval(scn, weights)
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(fn, dvs, chunksize=max(1, len(dvs) // (4 * jobs))))
    return [fn(d) for d in dvs]


class _DecisionEval:
    def __init__(self, scn, weights):
        self.scn, self.weights = scn, weights

    def __call__(self, dv):
        return evaluate(self.scn, self.weights, dv)


def grid_search(scn: ScenarioConfig, steps=(20, 20, 20), weights: FitnessWeights | None = None,
                jobs: int = 1) -> OptimizationResult:
    """Exhaustive search; best feasible point by objective, else by fitness.

    With ``m = 2n - 1`` steps the grid contains the ``n``-step grid, so
    refining this way never worsens the result.
    """
    weights = weights or FitnessWeights()
    t0 = time.perf_counter()
    Ps, Ls, Ss = grid_axes(scn, steps)
    dvs = [DecisionVector(float(p), float(l), float(s)) for p in Ps for l in Ls for s in Ss]
    evs = _evaluate_points(scn, weights, dvs, jobs)
    dv, ev = _best_of(list(zip(dvs, evs)))
    return OptimizationResult(best=dv, fitness=ev.fitness, objective=ev.objective,
                              feasibility=ev.feasibility, generations=1, evals=len(dvs),
                              termination="exhaustive", evaluation=ev,
                              wall_time=time.perf_counter() - t0)


def grid_gap(scn: ScenarioConfig, result: OptimizationResult, steps=(20, 20, 20),
             refine: int = 5, weights: FitnessWeights | None = None) -> float:
    """One-cell discretization gap around a grid optimum.

    Samples a ``refine^3`` lattice over the grid cells adjacent to the optimum
    and returns the spread (max - min) of the objective over its feasible
    points; 0 when fewer than two are feasible.
    """
    weights = weights or FitnessWeights()
    g = encode(scn, result.best)
    cell = np.array([1.0 / (n - 1) for n in steps])
    lin = [np.linspace(max(v - c, 0.0), min(v + c, 1.0), refine) for v, c in zip(g, cell)]
    vals = []
    for a in lin[0]:
        for b in lin[1]:
            for c in lin[2]:
                ev = evaluate(scn, weights, decode(scn, (a, b, c)))
                if ev.feasibility.feasible:
                    vals.append(ev.objective)
    return float(max(vals) - min(vals)) if len(vals) >= 2 else 0.0


def complexity_probe(scn: ScenarioConfig, ga: GaConfig | None = None,
                     weights: FitnessWeights | None = None) -> dict:
    """Count fitness evaluations of a GA run and time them."""
    ga = ga or GaConfig()
    res = ga_optimize(scn, ga, weights)
    bound = ga.pop_size * ga.max_gen
    if res.evals > bound:
        raise AssertionError(f"{res.evals} evaluations exceed m*n = {bound}")
    return {"evals": res.evals, "wall_time_per_eval": res.wall_time / res.evals,
            "generations": res.generations, "termination": res.termination, "bound": bound}
