#
# Copyright (c) 2026 negosim contributors
#
# SPDX-License-Identifier: MIT

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from negosim.twin import (
    INFEASIBLE,
    DigitalTwin,
    SliceLoad,
    StreamPurpose,
    TrafficPerturbation,
    TwinException,
    TwinState,
    check_chance_constraint,
    draw_state,
    initial_state,
    jain_index,
    min_bw_for_sla,
    predict_energy_saving,
    predict_latency,
    queue_latency_ms,
    simulate,
    stream,
    sync,
)

UC1_ANCHORS = {"URLLC": 9.0, "eMBB": 7.8}


def test_queue_latency():
    assert float(queue_latency_ms(0.1, 50.0, 10.0, 7.0)) == pytest.approx(5.0)
    assert math.isinf(float(queue_latency_ms(0.1, 50.0, 5.0, 7.0)))
    assert math.isinf(float(queue_latency_ms(0.1, 70.0, 10.0, 7.0)))


def test_predict_latency(uc1, uc2):
    state = initial_state(uc1)
    assert predict_latency(state, "URLLC", 10.0) == pytest.approx(5.0)
    assert predict_latency(state, "URLLC", 5.0) == INFEASIBLE

    state = initial_state(uc2)
    # 0.25 Mb over (175 - 100) Mb/s, then 1000 cycles/bit at 20 GHz
    latency = predict_latency(state, "RAN", 25.0, 20.0, cycles_per_bit=1000.0)
    assert latency == pytest.approx(0.25 / 75.0 * 1000.0 + 5.0)


def test_predict_latency_invalid(uc1):
    state = initial_state(uc1)
    with pytest.raises(TwinException):
        predict_latency(state, "URLLC", -1.0)
    with pytest.raises(TwinException):
        predict_latency(state, "URLLC", 10.0, 0.0)
    with pytest.raises(TwinException, match="no state"):
        predict_latency(state, "RAN", 10.0)


def test_predict_energy_saving(uc2):
    caps = uc2.capacities
    assert predict_energy_saving(20.0, None, caps) == pytest.approx(50.0)
    assert predict_energy_saving(None, 22.5, caps) == pytest.approx(87.5)
    assert predict_energy_saving(20.0, 22.5, caps) == pytest.approx(68.75)
    assert predict_energy_saving(40.0, None, caps) == pytest.approx(0.0)

    with pytest.raises(TwinException):
        predict_energy_saving(41.0, None, caps)
    with pytest.raises(TwinException):
        predict_energy_saving(None, 46.0, caps)
    with pytest.raises(TwinException):
        predict_energy_saving(None, None, caps)


@settings(max_examples=200, deadline=None)
@given(
    a=st.floats(0.0, 40.0),
    b=st.floats(0.0, 40.0),
)
def test_energy_saving_monotone(uc2, a, b):
    caps = uc2.capacities
    lo, hi = sorted((a, b))
    assert predict_energy_saving(lo, None, caps) >= predict_energy_saving(hi, None, caps)


def test_min_bw_for_sla(uc1):
    state = initial_state(uc1)
    urllc = uc1.get_slice("URLLC")
    embb = uc1.get_slice("eMBB")
    assert min_bw_for_sla(state, urllc) == pytest.approx(60.0 / 7.0)
    assert min_bw_for_sla(state, embb) == pytest.approx(52.0 / 7.0)
    assert predict_latency(state, "URLLC", min_bw_for_sla(state, urllc)) <= urllc.sla_latency


def test_min_bw_idle(uc1):
    state = TwinState({"URLLC": SliceLoad(0.0, 0.0)}, 7.0)
    assert min_bw_for_sla(state, uc1.get_slice("URLLC")) == 0.0


def test_min_bw_invalid_sla(uc1):
    with pytest.raises(TwinException):
        min_bw_for_sla(initial_state(uc1), uc1.get_slice("URLLC"), sla=0.0)


@settings(max_examples=200, deadline=None)
@given(
    rate=st.floats(0.0, 200.0),
    backlog=st.floats(0.01, 2.0),
    eta=st.floats(1.0, 10.0),
    sla=st.floats(1.0, 100.0),
)
def test_min_bw_meets_sla(uc1, rate, backlog, eta, sla):
    state = TwinState({"URLLC": SliceLoad(rate, backlog)}, eta)
    b = min_bw_for_sla(state, uc1.get_slice("URLLC"), sla=sla)
    assert predict_latency(state, "URLLC", b) <= sla
    assert not predict_latency(state, "URLLC", b * 0.99) <= sla


@settings(max_examples=200, deadline=None)
@given(a=st.floats(8.0, 50.0), b=st.floats(8.0, 50.0))
def test_latency_monotone_in_bandwidth(uc1, a, b):
    state = initial_state(uc1)
    lo, hi = sorted((a, b))
    assert predict_latency(state, "URLLC", lo) >= predict_latency(state, "URLLC", hi)


def test_jain_index():
    assert jain_index([1.0, 1.0]) == pytest.approx(1.0)
    assert jain_index([1.0, 0.0]) == pytest.approx(0.5)
    assert jain_index([0.0, 0.0]) == 0.0
    assert jain_index([]) == 0.0


def test_simulate_parallel(uc1):
    state = initial_state(uc1)
    cost = simulate(state, UC1_ANCHORS, uc1)

    urllc = 0.1 / (63.0 - 50.0) * 1000.0
    embb = 0.1 / (54.6 - 50.0) * 1000.0
    assert cost.latency == pytest.approx((urllc + embb) / 2)
    assert cost.energy_saving == pytest.approx((1 - 16.8 / 50.0) * 100.0)
    assert cost.risk == 0.0
    margins = [(10.0 - urllc) / 10.0, (50.0 - embb) / 50.0]
    assert cost.fairness == pytest.approx(jain_index(margins))

    focused = simulate(state, UC1_ANCHORS, uc1, focus="URLLC")
    assert focused.latency == pytest.approx(urllc)
    assert focused.samples == (pytest.approx(urllc),)


def test_simulate_serial(uc2):
    state = initial_state(uc2)
    cost = simulate(state, {"RAN": 25.0, "Edge": 22.5}, uc2)
    assert cost.latency == pytest.approx(0.25 / 75.0 * 1000.0 + 1000.0 * 100e6 / 22.5e9)
    assert cost.energy_saving == pytest.approx((37.5 + 87.5) / 2)
    assert cost.feasible


def test_simulate_serial_needs_both(uc2):
    with pytest.raises(TwinException, match="both domains"):
        simulate(initial_state(uc2), {"RAN": 25.0}, uc2)


def test_simulate_infeasible(uc1):
    cost = simulate(initial_state(uc1), {"URLLC": 5.0, "eMBB": 7.8}, uc1)
    assert cost.latency == INFEASIBLE
    assert not cost.feasible
    assert cost.risk == 1.0


def test_simulate_invalid(uc1):
    state = initial_state(uc1)
    with pytest.raises(TwinException):
        simulate(state, {}, uc1)
    with pytest.raises(TwinException):
        simulate(state, UC1_ANCHORS, uc1, horizon=0)
    with pytest.raises(TwinException, match="above"):
        simulate(state, {"URLLC": 30.0, "eMBB": 30.0}, uc1)
    with pytest.raises(TwinException, match="unknown slice"):
        simulate(state, {"RAN": 10.0}, uc1)
    with pytest.raises(TwinException, match="does not serve"):
        simulate(state, {"URLLC": 10.0}, uc1, focus="eMBB")


def test_simulate_reproducible(uc1):
    state = initial_state(uc1)
    p = TrafficPerturbation(0.1, 1234)
    a = simulate(state, UC1_ANCHORS, uc1, 64, p)
    b = simulate(state, UC1_ANCHORS, uc1, 64, p)
    assert a == b
    assert a.samples == b.samples
    assert len(a.samples) == 64


def test_perturbation():
    assert np.array_equal(TrafficPerturbation(0.0, 1).draws(4), np.ones(4))
    a = TrafficPerturbation(0.1, 5).draws(8)
    b = TrafficPerturbation(0.1, 5).draws(8)
    c = TrafficPerturbation(0.1, 6).draws(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    with pytest.raises(TwinException):
        TrafficPerturbation(-0.1).draws(1)


@pytest.mark.parametrize(
    "within,expected",
    [
        (20, True),
        (19, True),
        (18, False),
        (0, False),
    ],
)
def test_chance_constraint_boundary(within, expected):
    samples = [5.0] * within + [15.0] * (20 - within)
    assert check_chance_constraint(samples, 10.0, 0.05) == expected


def test_chance_constraint_inclusive():
    assert check_chance_constraint([10.0], 10.0, 0.0)
    assert not check_chance_constraint([math.inf], 10.0, 0.5)
    with pytest.raises(TwinException):
        check_chance_constraint([], 10.0, 0.05)


def test_sync(uc1):
    state = initial_state(uc1)
    synced = sync(state, {"URLLC": {"traffic_rate": 70.0, "queue_backlog": 0.3}})
    assert synced.load("URLLC").traffic_rate == pytest.approx(60.0)
    assert synced.load("URLLC").queue_backlog == pytest.approx(0.3)
    assert synced.load("eMBB") == state.load("eMBB")

    with pytest.raises(TwinException):
        sync(state, {"URLLC": {"traffic_rate": -1.0, "queue_backlog": 0.0}})


def test_state_validation():
    with pytest.raises(TwinException):
        SliceLoad(-1.0, 0.0)
    with pytest.raises(TwinException):
        TwinState({}, 0.0)


def test_streams():
    a = stream(42, 3, StreamPurpose.ANCHOR).random(4)
    b = stream(42, 3, StreamPurpose.ANCHOR).random(4)
    c = stream(42, 3, StreamPurpose.STATE).random(4)
    d = stream(42, 4, StreamPurpose.ANCHOR).random(4)
    e = stream(42, 3, StreamPurpose.ANCHOR, 1).random(4)
    assert np.array_equal(a, b)
    for other in (c, d, e):
        assert not np.array_equal(a, other)


def test_draw_state(uc2):
    a = draw_state(uc2, stream(1, 0, StreamPurpose.STATE), 0)
    b = draw_state(uc2, stream(1, 0, StreamPurpose.STATE), 0)
    assert a == b
    assert 6.0 <= a.eta_current <= 8.0
    assert a.load("RAN").queue_backlog == 0.25


def test_twin_requirements(uc1, uc2):
    twin = DigitalTwin(uc2, initial_state(uc2))
    assert twin.min_requirement(uc2.get_slice("RAN")) == pytest.approx(150.0 / 7.0)
    assert twin.min_requirement(uc2.get_slice("Edge")) == pytest.approx(20.0)
    assert twin.upper_bound(uc2.get_slice("Edge")) == 45.0
    assert twin.reference_allocation() == {"RAN": 40.0, "Edge": 45.0}

    twin = DigitalTwin(uc1, initial_state(uc1))
    assert twin.upper_bound(uc1.get_slice("URLLC"), UC1_ANCHORS) == pytest.approx(42.2)
    ref = twin.reference_allocation(UC1_ANCHORS)
    assert sum(ref.values()) == pytest.approx(50.0)
    assert ref["URLLC"] == pytest.approx(50.0 * 9.0 / 16.8)
    assert twin.reference_allocation() == {"URLLC": 25.0, "eMBB": 25.0}


def test_twin_realised(uc1):
    twin = DigitalTwin(uc1, initial_state(uc1))
    realised = twin.realised(UC1_ANCHORS, [1.0, 1.0])
    assert realised["URLLC"] == (pytest.approx(0.1 / 13.0 * 1000.0), 10.0)
    assert realised["eMBB"][1] == 50.0
