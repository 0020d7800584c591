import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swipt_opt import perf
from swipt_opt.config import load_config
from swipt_opt.perf import (
    NonConvergence,
    capacity,
    evaluate_performance,
    fair_weight,
    h_operator,
    mean_interference,
    mean_user_power,
    radial_rule,
    solve_downlink_delay,
    solve_uplink_delay,
    with_w_d,
)

# mpmath at 30 digits: B=50 MHz, k=3, alpha=3, G=10, P=5 W, r=200 m, I=0, N0=-174 dBm/Hz in the band
CAPACITY_ORACLE = 441485975.21818210402
# E[Jt] over the unit-density serving-distance law
RAYLEIGH_MEAN_JT = 1.2802


def test_capacity_oracle(paper):
    assert capacity(200.0, 5.0, 10.0, 0.0, paper.radio) == pytest.approx(CAPACITY_ORACLE, rel=1e-12)


def test_capacity_limits(paper):
    assert capacity(200.0, 0.0, 10.0, 0.0, paper.radio) == 0.0
    i = np.geomspace(1e-15, 1e3, 50)
    c = capacity(200.0, 5.0, 10.0, i, paper.radio)
    assert np.all(np.diff(c) < 0)
    assert c[-1] < 1e-3 * c[0]


def test_mean_interference_example(make_scn):
    scn = make_scn(sets=["radio.p_tx=5", "radio.gain=1", "radio.L=none",
                          "population.lambda_b=1e-5"])
    assert scn.radio.mean_gain == 1.0
    assert mean_interference(100.0, scn, 1.0) == pytest.approx(1.0471975511965977e-6, rel=1e-12)
    assert mean_interference(100.0, scn, 0.0) == 0.0
    doubled = replace(scn, radio=replace(scn.radio, reuse=6))
    assert mean_interference(100.0, doubled, 1.0) == pytest.approx(0.5 * mean_interference(100.0, scn, 1.0))


def test_mean_user_power_example(make_scn):
    scn = make_scn(sets=["population.lambda_b=1e-5"])
    assert mean_user_power(scn, 1.0) == pytest.approx(1.8849555921538759e-5, rel=1e-12)
    assert mean_user_power(scn, 0.0) == 0.0
    bb = make_scn(sets=["population.lambda_b=1e-5", "population.gamma=0", "scheduling.p_bb=0.5"])
    assert mean_user_power(bb, 0.7) == pytest.approx(0.5 * 1e-5 * math.pi * 3 * 0.7)


def test_mean_user_power_free_of_user_density(make_scn):
    vals = {mean_user_power(make_scn(sets=[f"population.lambda_u={lu!r}"]), 0.6)
            for lu in (1e-4, 1e-3, 1e-2, 1e-1)}
    assert len(vals) == 1


def test_h_operator_constant_rate(paper):
    c = 3e7
    pop = paper.population
    h = h_operator(1.0, 1.0, lambda r: np.full_like(r, c), paper)
    q = 1.0 + pop.iot_fraction * (pop.duty_cycle - 1.0)
    assert h == pytest.approx(pop.lambda_u * q * RAYLEIGH_MEAN_JT / (pop.lambda_b * c), rel=2e-4)
    assert h_operator(1.0, 2.0, lambda r: np.full_like(r, c), paper) == pytest.approx(0.5 * h, rel=1e-14)
    assert h_operator(1.0, 1.0, lambda r: np.full_like(r, 2 * c), paper) == pytest.approx(0.5 * h, rel=1e-14)


def test_h_operator_fast_matches_adaptive(paper):
    g = lambda r: capacity(r, 11.0, 10.0, mean_interference(r, paper, 0.9), paper.radio)  # noqa: E731
    fast = h_operator(1.0, 1.0, g, paper)
    slow = h_operator(1.0, 1.0, g, paper, method="adaptive")
    assert fast == pytest.approx(slow, rel=1e-4)


@pytest.mark.parametrize("kind,split", [("ts", 0.99965), ("sps", 0.3), ("dps", 0.3)])
def test_downlink_matches_refined_rule(make_scn, monkeypatch, kind, split):
    scn = make_scn(sets=[f"mode.kind={kind}", f"mode.split={split}"])
    base = evaluate_performance(scn)
    fine = radial_rule(float(scn.numerics.tail_mass), panels=160)
    monkeypatch.setattr(perf, "_rule_for", lambda s: fine)
    ref = evaluate_performance(scn)
    for name in ("tau_d", "tau_dI", "tau_u"):
        assert getattr(base, name) == pytest.approx(getattr(ref, name), rel=1e-4)


def test_ts_delay_relations(paper):
    rep = evaluate_performance(paper)
    eta = paper.mode.split
    assert rep.tau_dI == rep.tau_d * rep.w_d / (1 - eta)
    assert rep.tau_uI == paper.scheduling.delta_u * rep.tau_u
    assert rep.converged and min(rep.tau_d, rep.tau_dI, rep.tau_u, rep.tau_uI) > 0


def test_ts_zero_split_all_iot(make_scn):
    scn = make_scn(sets=["population.gamma=1", "mode.split=0", "scheduling.w_d=100"])
    tau_d, tau_di, _ = solve_downlink_delay(scn)
    assert tau_di == pytest.approx(tau_d * scn.scheduling.delta_d, rel=1e-15)


def test_uplink_relations(make_scn):
    scn = make_scn(sets=["scheduling.delta_u=1"])
    tau_u, tau_ui = solve_uplink_delay(scn)
    assert tau_ui == tau_u
    halved = make_scn(sets=["scheduling.p_iot=0.1"])
    assert solve_uplink_delay(halved)[0] > solve_uplink_delay(make_scn())[0]


def test_fair_weight_cases(make_scn):
    dd = 100.0
    assert fair_weight(make_scn(sets=["mode.split=0"])) == dd
    assert fair_weight(make_scn(sets=["mode.kind=sps", "mode.split=0"])) == pytest.approx(dd, rel=1e-15)
    half = fair_weight(make_scn(sets=["mode.kind=sps", "mode.split=0.5"]))
    assert 0 < half < dd
    ws = [fair_weight(make_scn(sets=["mode.kind=dps", f"mode.split={v}"])) for v in (0.1, 0.5, 0.9, 0.999)]
    assert all(a > b for a, b in zip(ws, ws[1:]))


def test_sps_zero_equals_ts_zero(make_scn):
    ts = evaluate_performance(make_scn(sets=["mode.split=0"]))
    sps = evaluate_performance(make_scn(sets=["mode.kind=sps", "mode.split=0", "scheduling.w_d=100"]))
    assert sps.tau_d == pytest.approx(ts.tau_d, rel=1e-12)
    assert sps.tau_dI == pytest.approx(ts.tau_dI, rel=1e-6)


def test_map_monotone_and_residual(paper):
    w = perf.effective_w_d(paper)
    T = perf._downlink_map(paper, w)
    tau0 = paper.qos.tau_d0
    grid = np.linspace(0.0, 3 * tau0, 40)
    vals = [T(t) for t in grid]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    tau = evaluate_performance(paper).tau_d
    assert abs(T(tau) - tau) < paper.numerics.fp_tol * tau0


def test_nonconvergence_reports_last_iterate(paper):
    scn = replace(paper, numerics=replace(paper.numerics, fp_max_iter=1, fp_tol=1e-15))
    with pytest.raises(NonConvergence) as ei:
        evaluate_performance(scn)
    assert ei.value.last > 0 and ei.value.residual > 0


def test_adaptive_method_agrees(paper):
    a = evaluate_performance(paper)
    b = evaluate_performance(paper, method="adaptive")
    assert b.tau_d == pytest.approx(a.tau_d, rel=1e-4)
    assert b.tau_u == pytest.approx(a.tau_u, rel=1e-4)


@settings(max_examples=30, deadline=None)
@given(st.floats(1.0, 11.0), st.floats(-5.0, -2.0), st.floats(-4.0, -2.0), st.floats(0.0, 0.999))
def test_converges_in_contraction_region(p, log_lb, log_lu, eta):
    lam_b = 10 ** log_lb
    lam_u = max(10 ** log_lu, 5 * lam_b)
    scn = load_config(sets=[f"radio.p_tx={p!r}", f"population.lambda_b={lam_b!r}",
                            f"population.lambda_u={lam_u!r}", f"mode.split={eta!r}"]).scenario
    try:
        rep = evaluate_performance(scn)
    except NonConvergence:
        # only an overloaded network may run away
        assert perf._downlink_map(scn, perf.effective_w_d(scn))(0.0) > scn.qos.tau_d0
        return
    assert rep.converged and rep.tau_d >= perf._downlink_map(scn, rep.w_d)(0.0) * (1 - 1e-9)


def test_with_w_d(paper):
    assert with_w_d(paper, 3.0).scheduling.w_d == 3.0
