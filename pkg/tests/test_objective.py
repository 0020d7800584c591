import math
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swipt_opt import objective
from swipt_opt.config import load_config
from swipt_opt.core import DecisionVector
from swipt_opt.objective import (
    FEAS_TOL,
    FitnessWeights,
    check_feasibility,
    evaluate,
    fitness,
    objective_value,
    penalty_scale,
)
from swipt_opt.perf import PerformanceReport, evaluate_performance


def _perf(util_d=0.5, util_u=0.1, w_d=1.0):
    return PerformanceReport(tau_d=util_d * 1e-5, tau_dI=util_d * 1e-3, tau_u=util_u * 1e-4,
                             tau_uI=util_u * 1e-4, util_d=util_d, util_u=util_u, o_bar=1e-7,
                             w_d=w_d, iterations=3, converged=True, residual=0.0)


def _fake_model(monkeypatch, perf, cdf):
    monkeypatch.setattr(objective, "evaluate_performance", lambda scn: perf)
    monkeypatch.setattr(objective, "build_profile", lambda scn, p: None)
    monkeypatch.setattr(objective, "cdf_h", lambda prof, h0: cdf)


def test_objective_llp_full_load(make_scn):
    scn = make_scn(sets=["radio.p_tx=11", "population.lambda_b=1e-6"])
    assert objective_value(scn, _perf(util_d=1.0)) * 1e6 == pytest.approx(1500.0, rel=1e-12)


def test_objective_idle_network(make_scn):
    scn = make_scn("hlp", sets=["population.lambda_b=2e-4"])
    assert objective_value(scn, _perf(util_d=0.0)) == pytest.approx(2e-4 * 482.3, rel=1e-14)


def test_objective_increasing_in_density(make_scn):
    vals = [objective_value(make_scn(sets=[f"population.lambda_b={lb!r}"]), _perf(util_d=0.4))
            for lb in (1e-5, 1e-4, 1e-3)]
    assert vals[0] < vals[1] < vals[2]


def test_uplink_hinge(monkeypatch, paper):
    _fake_model(monkeypatch, _perf(util_d=0.5, util_u=1.5), 0.0)
    ev = evaluate(paper, FitnessWeights(k1=1000.0))
    assert ev.fitness == pytest.approx(ev.objective + 500.0, rel=1e-14)
    assert not ev.feasibility.feasible
    assert ev.feasibility.violated() == ["C1_ul"]


def test_downlink_and_harvest_hinges(monkeypatch, paper):
    _fake_model(monkeypatch, _perf(util_d=1.2), 0.15)
    ev = evaluate(paper)
    assert ev.fitness == pytest.approx(ev.objective + 5000 * 0.1 + 1000 * 0.2, rel=1e-12)
    assert set(ev.feasibility.violated()) == {"C1_dl", "C4"}


def test_verbatim_sign(monkeypatch, paper):
    _fake_model(monkeypatch, _perf(), 0.01)
    lit = evaluate(paper, FitnessWeights(verbatim=True))
    assert lit.fitness == pytest.approx(lit.objective + 5000 * 0.04, rel=1e-12)
    assert evaluate(paper).fitness == evaluate(paper).objective


def test_feasible_point_scores_its_objective(paper):
    ev = evaluate(paper)
    assert ev.feasibility.feasible
    assert ev.fitness == ev.objective
    slow = objective_value(paper, evaluate_performance(paper, method="adaptive"))
    assert ev.objective == pytest.approx(slow, rel=1e-4)
    assert 7e5 < ev.objective * 1e6 < 7.4e5


def test_penalty_scale(make_scn):
    scn = make_scn()
    assert penalty_scale(scn) == 1e-2 * (1100.0 + 100.0 + 30.0 * (11.0 - 1.0))
    assert penalty_scale(make_scn("hlp")) == 1e-2 * (482.3 + 48.23 + 144.69 * 10.0)


def test_full_tolerance_satisfies_harvest_constraint(paper):
    scn = replace(paper, qos=replace(paper.qos, mu=1.0))
    assert check_feasibility(scn).slacks["C4"] <= 0


def test_users_per_bs_bound(make_scn):
    scn = make_scn(sets=["population.lambda_u=1e-4", "population.lambda_b=5e-4",
                         "radio.p_tx=6", "mode.split=0.5"])
    rep = check_feasibility(scn)
    assert rep.slacks["users_per_bs"] == pytest.approx(5 - 0.2)
    assert not rep.feasible


def test_failure_is_scored_not_raised(paper):
    scn = replace(paper, numerics=replace(paper.numerics, fp_max_iter=1, fp_tol=1e-15))
    ev = evaluate(scn)
    assert ev.feasibility.status == "nonconvergence"
    assert ev.perf is None and math.isnan(ev.objective)
    assert ev.fitness == 1e6 * penalty_scale(scn)


def test_decision_argument(paper):
    dv = DecisionVector(7.0, 2e-4, 0.999)
    ev = evaluate(paper, decision=dv)
    assert (ev.scenario.radio.p_tx, ev.scenario.population.lambda_b, ev.scenario.mode.split) == (7.0, 2e-4, 0.999)
    assert fitness(ev.scenario) == ev.fitness


@settings(max_examples=40, deadline=None)
@given(st.floats(1.0, 11.0), st.floats(-5.0, -2.0), st.floats(0.0, 1.0),
       st.sampled_from(["ts", "sps", "dps"]))
def test_fitness_dominates_objective(p, log_lb, split, kind):
    scn = load_config(sets=[f"mode.kind={kind}"]).scenario
    ev = evaluate(scn, decision=DecisionVector(p, 10 ** log_lb, split))
    rep = ev.feasibility
    assert rep.feasible == all(v <= FEAS_TOL for v in rep.slacks.values())
    if ev.perf is not None:
        assert ev.fitness >= ev.objective
        if rep.feasible:
            assert ev.fitness == ev.objective
