import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hetnet_hotspot.classes import FlowClass, FlowClassSet
from hetnet_hotspot.dynamics import (
    CellLoads,
    InstabilityError,
    TrafficModel,
    arrival_split,
    class_throughput,
    expanded_decoupled_model,
    fixed_point_loads,
    log_stationary_prob,
    mean_flows,
    normalization_mass,
    solve_loads,
    stationary_prob,
)
from hetnet_hotspot.experiments import _random_traffic, hand_instance
from hetnet_hotspot.static import CoverageSplit


def _macro_only(lam=3.0, s0=1.0):
    # the small cell carries no traffic, so the macro is an exact multi-class PS queue
    fcs = FlowClassSet(
        (FlowClass(0.5, 10.0, 5.0), FlowClass(0.3, 20.0, 8.0), FlowClass(0.2, 40.0, 40.0)),
        (FlowClass(1.0, 30.0, 10.0),),
        CoverageSplit(1.0, 0.0),
    )
    return TrafficModel(lam, s0, fcs)


def test_hand_instance_loads():
    loads = solve_loads(hand_instance())
    assert loads.rho == pytest.approx(0.26 / 0.96, abs=1e-15)
    assert loads.rho_small == pytest.approx(0.34 / 0.96, abs=1e-15)
    fp = fixed_point_loads(hand_instance())
    assert fp.rho == pytest.approx(loads.rho, abs=1e-11)
    assert fp.rho_small == pytest.approx(loads.rho_small, abs=1e-11)


def test_hand_instance_metrics():
    t = hand_instance()
    loads = solve_loads(t)
    rho, rho_s = loads.rho, loads.rho_small
    perf = class_throughput(t, loads)
    tau = (rho_s / 2.5 + (1 - rho_s) / 5.0) / (1 - rho)
    assert perf.macro.sojourn_s[0] == pytest.approx(tau, rel=1e-14)
    assert perf.macro.mean_flows[0] == pytest.approx(1.0 * tau, rel=1e-14)
    assert perf.macro.v_little[0] == pytest.approx(1.0 / tau, rel=1e-14)
    assert perf.macro.v_eq29[0] == pytest.approx((rho_s * 2.5 + (1 - rho_s) * 5.0) * (1 - rho), rel=1e-14)
    assert stationary_prob([0], [0], loads, t) == pytest.approx((1 - rho) * (1 - rho_s), rel=1e-14)


def test_arrival_split():
    lam, lam_s = arrival_split(hand_instance())
    assert lam.tolist() == [1.0] and lam_s.tolist() == [1.0]
    lam, lam_s = arrival_split(_macro_only())
    assert lam == pytest.approx([1.5, 0.9, 0.6])
    assert lam_s.tolist() == [0.0]


@given(st.integers(0, 2**32 - 1))
def test_closed_form_matches_fixed_point(seed):
    t = _random_traffic(np.random.default_rng(seed))
    try:
        a = solve_loads(t)
    except InstabilityError:
        return
    b = fixed_point_loads(t)
    assert abs(a.rho - b.rho) <= 1e-10
    assert abs(a.rho_small - b.rho_small) <= 1e-10


@given(st.integers(0, 2**32 - 1))
def test_metric_identities(seed):
    t = _random_traffic(np.random.default_rng(seed))
    try:
        loads = solve_loads(t)
    except InstabilityError:
        return
    perf = class_throughput(t, loads)
    ex = expanded_decoupled_model(t, loads)
    # the expanded model reproduces the loads and the flow counts
    assert ex.macro_load == pytest.approx(loads.rho, abs=1e-12)
    assert ex.small_load == pytest.approx(loads.rho_small, abs=1e-12)
    n, ns = mean_flows(t, loads)
    assert ex.mean_counts("macro") == pytest.approx(n, rel=1e-12)
    assert ex.mean_counts("small") == pytest.approx(ns, rel=1e-12)
    # Little's law and the harmonic / arithmetic ordering of the two throughputs
    for rep in (perf.macro, perf.small):
        assert rep.mean_flows == pytest.approx(rep.arrival_rate * rep.sojourn_s, rel=1e-12)
        assert np.all(rep.v_little <= rep.v_eq29 * (1 + 1e-12))
    assert 0 <= loads.rho < 1 and 0 <= loads.rho_small < 1


def test_decoupled_rates_give_plain_loads():
    fcs = FlowClassSet((FlowClass(1.0, 10.0, 10.0),), (FlowClass(1.0, 20.0, 20.0),), CoverageSplit(0.4, 0.6))
    t = TrafficModel(5.0, 1.0, fcs)
    loads = solve_loads(t)
    assert loads.rho == pytest.approx(0.2)
    assert loads.rho_small == pytest.approx(0.15)
    n, ns = mean_flows(t, loads)
    assert n.sum() == pytest.approx(0.2 / 0.8)
    assert ns.sum() == pytest.approx(0.15 / 0.85)


def test_zero_traffic():
    t = hand_instance().with_lambda(0.0)
    loads = solve_loads(t)
    assert (loads.rho, loads.rho_small) == (0.0, 0.0)
    perf = class_throughput(t, loads)
    assert perf.macro.total_flows == 0.0
    assert perf.macro.v_eq29[0] == 5.0 and perf.macro.v_little[0] == 5.0
    assert perf.small.mean_v_little == pytest.approx(1 / 0.3)


def test_instability():
    with pytest.raises(InstabilityError):
        solve_loads(hand_instance().with_lambda(20.0))
    with pytest.raises(InstabilityError):
        fixed_point_loads(hand_instance().with_lambda(20.0))
    with pytest.raises(InstabilityError):
        mean_flows(hand_instance(), CellLoads(1.0, 0.2))
    with pytest.raises(InstabilityError):
        stationary_prob([0], [0], CellLoads(0.5, 1.2), hand_instance())


def test_traffic_validation():
    fcs = FlowClassSet((FlowClass(1.0, 2.0, 3.0),), (), CoverageSplit(1.0, 0.0))
    with pytest.raises(ValueError):
        TrafficModel(1.0, 1.0, fcs)
    with pytest.raises(ValueError):
        TrafficModel(-1.0, 1.0, hand_instance().classes)
    with pytest.raises(ValueError):
        TrafficModel(1.0, 0.0, hand_instance().classes)


def test_single_cell_product_form_is_exact_ps():
    t = _macro_only()
    loads = solve_loads(t)
    a = np.array([1.5 / 10, 0.9 / 20, 0.6 / 40])
    assert loads.rho == pytest.approx(a.sum())
    assert loads.rho_small == 0.0
    for n in ([0, 0, 0], [1, 0, 0], [2, 1, 3], [0, 4, 1]):
        exact = (1 - a.sum()) * math.factorial(sum(n)) * np.prod([x**k / math.factorial(k) for x, k in zip(a, n)])
        assert stationary_prob(n, [0], loads, t) == pytest.approx(exact, rel=1e-12)
    assert stationary_prob([0, 0, 0], [1], loads, t) == 0.0
    assert normalization_mass(loads, t, max_total=80) == pytest.approx(1.0, abs=1e-12)
    n, _ = mean_flows(t, loads)
    assert n == pytest.approx(a / (1 - a.sum()), rel=1e-12)


def test_coupled_product_form_is_approximate():
    # the decoupled product form is not a distribution when both cells interact
    mass = normalization_mass(solve_loads(hand_instance()), hand_instance(), max_total=60)
    assert math.isfinite(mass) and abs(mass - 1.0) > 1e-3


def test_state_validation():
    t, loads = hand_instance(), solve_loads(hand_instance())
    with pytest.raises(ValueError):
        log_stationary_prob([0, 0], [0], loads, t)
    with pytest.raises(ValueError):
        log_stationary_prob([-1], [0], loads, t)


def test_report_csv():
    perf = class_throughput(hand_instance())
    header, *rows = perf.to_csv().splitlines()
    assert header == "cell,class,lambda,N_mean,sojourn_s,v_eq29_mbps,v_little_mbps"
    assert [r.split(",")[0] for r in rows] == ["macro", "small"]
