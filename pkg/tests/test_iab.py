import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mwiab.domain import (AccessBand, BandAvailability, BandState, CarrierParams, DuConfig, Terminal,
                          TerminalKind)
from mwiab.iab import (MIDBAND, MMWAVE, AnswerTable, IabDu, LoadUndefined, UtilizationTracker, adapt_mcs_power,
                       allocate, dmcp_iterate, initial_entry, period_update, rb_utilization, reselect_entry,
                       select_band, subtree_demands, traffic_load, update_rb_budget)
from mwiab.phy import max_du_rate, mcs_rate, rb_bandwidth
from mwiab.tables import MCS_TABLE, MID_TABLE_INDEX, NUMEROLOGY_TABLE, McsEntry

from tests.staircase import NOISE, PARAMS, run_staircase

FR1_PARAMS = CarrierParams(layers=4, modulation_order=8, max_code_rate=948 / 1024, overhead=0.14, numerology=1)
FR2_PARAMS = CarrierParams(layers=4, modulation_order=8, max_code_rate=948 / 1024, overhead=0.18, numerology=3)
CARRIERS = {
    MMWAVE: AccessBand(MMWAVE, 38.0, "FR2", FR2_PARAMS, 3, 400e6),
    MIDBAND: AccessBand(MIDBAND, 6.0, "FR1", FR1_PARAMS, 1, 100e6),
}
Q8 = [McsEntry(0, 8, 948 / 1024, 10 ** 2.5)]


def small_du(n=2, adaptive=False, cap=40.0, distance=300.0):
    terms = [Terminal(f"c{i}", TerminalKind.CPE, "du", distance, BandAvailability(0.9)) for i in range(n)]
    return IabDu(DuConfig("du", power_cap=cap), terms, CARRIERS, adaptive=adaptive)


def test_budget_update_fixture():
    assert update_rb_budget(0.6, 0.8, 264) == 184
    assert update_rb_budget(1.0, 1.0, 264) == 264


def test_traffic_load_and_utilization():
    assert traffic_load(1, 0, 0.8e9, 5e9, 1e9, 1.0) == pytest.approx(0.8)
    assert traffic_load(0, 1, 9.0, 0.3, 1.0, 1.0) == pytest.approx(0.3)
    with pytest.raises(LoadUndefined):
        traffic_load(0, 1, 1.0, 1.0, 1.0, 0.0)
    assert rb_utilization(132, 264) == 0.5
    assert rb_utilization(300, 264) == 1.0
    with pytest.raises(ValueError):
        rb_utilization(1, 0)


def test_select_band():
    assert select_band(BandAvailability(0.5)) == (1, 0)
    assert select_band(BandAvailability(0.5, BandState.MID_ONLY)) == (0, 1)


def test_initial_entries():
    assert (initial_entry("FR2").mu, initial_entry("FR2").n_rb) == (3, 264)
    assert initial_entry("FR1").mu == 0


def test_reselect_entry():
    cur = NUMEROLOGY_TABLE.entry(3, 400e6)
    assert reselect_entry(cur, 264) is cur
    down = reselect_entry(cur, 184)
    assert down.occupied_bandwidth <= 184 * rb_bandwidth(3)
    assert down.occupied_bandwidth < cur.occupied_bandwidth
    small = NUMEROLOGY_TABLE.entry(3, 100e6)
    assert reselect_entry(small, small.n_rb + 40).occupied_bandwidth >= (small.n_rb + 40) * rb_bandwidth(3)
    # the bandwidth in use is kept when shrinking
    held = reselect_entry(cur, 10, used_bandwidth_hz=200e6)
    assert held.occupied_bandwidth >= 200e6


def test_allocate_two_terminals_single_mcs():
    du = small_du()
    dec = allocate(du, {"c0": 100e6, "c1": 100e6}, band=MIDBAND, mcs_table=Q8, budget=264)
    assert dec.mu == 1
    assert [a.rb_count for a in dec.allocations.values()] == [12, 12]
    assert dec.rbs_used == 24 and not dec.unserved
    assert dec.violations(du.power_cap) == []
    assert dec.d_max == pytest.approx(1e6 * max_du_rate(FR1_PARAMS, 264))


def test_allocate_overflow_serves_smallest_first():
    du = small_du(3)
    dec = allocate(du, {"c0": 100e6, "c1": 300e6, "c2": 100e6}, band=MIDBAND, mcs_table=Q8, budget=30)
    assert set(dec.allocations) == {"c0", "c2"}
    assert dec.unserved == ["c1"] and dec.unserved_demand == 300e6
    assert dec.rbs_used <= 30


def test_allocate_zero_demand():
    dec = allocate(small_du(), {}, band=MIDBAND)
    assert dec.allocations == {} and dec.total_power == 0.0


def test_power_cap_drops_hungriest():
    du = small_du(2, cap=1e-9, distance=3000.0)
    dec = allocate(du, {"c0": 50e6, "c1": 50e6}, band=MMWAVE)
    assert dec.total_power <= 1e-9
    assert dec.unserved


def test_fixed_mcs_pins_index():
    du = small_du(2)
    dec = allocate(du, {"c0": 50e6, "c1": 20e6}, band=MIDBAND, fixed_mcs=MID_TABLE_INDEX)
    assert {a.mcs_index for a in dec.allocations.values()} == {MID_TABLE_INDEX}


@given(st.lists(st.floats(0, 4e8), min_size=1, max_size=6), st.integers(20, 273),
       st.sampled_from([MMWAVE, MIDBAND]), st.booleans())
def test_allocation_respects_budget_and_cap(demands, budget, band, fixed):
    du = small_du(len(demands), adaptive=True)
    dem = {f"c{i}": d for i, d in enumerate(demands)}
    dec = allocate(du, dem, band=band, budget=budget, fixed_mcs=MID_TABLE_INDEX if fixed else None)
    assert dec.rbs_used <= budget
    assert dec.total_power <= du.power_cap * (1 + 1e-12)
    for a in dec.allocations.values():
        assert a.rate >= a.demand
        assert a.shannon_rate >= a.demand
    served = set(dec.allocations) | set(dec.unserved)
    assert served == {k for k, v in dem.items() if v > 0}


@given(st.lists(st.floats(1e6, 2e8), min_size=1, max_size=5))
def test_adaptive_no_worse_than_fixed_when_both_serve(demands):
    du = small_du(len(demands), adaptive=False)
    dem = {f"c{i}": d for i, d in enumerate(demands)}
    ad = allocate(du, dem, band=MIDBAND)
    fx = allocate(du, dem, band=MIDBAND, fixed_mcs=MID_TABLE_INDEX)
    if not ad.unserved and not fx.unserved:
        assert ad.total_power <= fx.total_power * (1 + 1e-9)


def test_staircase_power_strictly_decreases():
    steps = run_staircase()
    for case, before, after, idx in steps:
        assert case == "decrease"
        assert after < before
        assert idx == 10


def test_adaptation_cases():
    t = MCS_TABLE
    rate = mcs_rate(PARAMS, t[10], 20)
    g = t[10].snr_threshold * NOISE / 0.01
    assert adapt_mcs_power(t, 10, 0.01, g, NOISE, 0.5 * rate, 20, PARAMS)[2] == "hold"
    idx, p, case = adapt_mcs_power(t, 10, 0.01, g * 0.5, NOISE, 2 * rate, 20, PARAMS, p_max=10.0)
    assert case == "increase" and idx > 10 and p > 0.01
    idx, p, case = adapt_mcs_power(t, 10, 0.01, g * 0.5, NOISE, 0.5 * rate, 20, PARAMS)
    assert case == "restore" and idx == 10 and p == pytest.approx(0.02)
    idx, p, case = adapt_mcs_power(t, 10, 0.01, g * 4, NOISE, 2 * rate, 20, PARAMS)
    assert case == "upgrade" and idx > 10


def test_tracker_and_period_update():
    du = small_du(1, adaptive=True)
    tr = du.tracker
    assert tr.averages(MMWAVE) is None
    rho = tr.record(MMWAVE, 0.6, 0.8e9, 1e9)
    assert rho == pytest.approx(0.8)
    tr.record(MMWAVE, 0.6, 0.8e9, 1e9)
    assert tr.averages(MMWAVE) == pytest.approx((0.6, 0.8))
    entries = period_update(du)
    assert entries[MMWAVE].occupied_bandwidth <= 184 * rb_bandwidth(3)
    assert du.tracker.averages(MMWAVE) is None


def test_dmcp_answer_table_nonincreasing(bundled):
    du_cfg = bundled.dus[0]
    du = IabDu(du_cfg, bundled.terminals_of(du_cfg.id), bundled.carriers)
    cpe = {t.id: 20e6 for t in bundled.cpes}
    dem = subtree_demands(bundled.terminals, cpe)
    table = AnswerTable()
    dec = dmcp_iterate(du, dem, table)
    assert table.nonincreasing()
    assert len(table.records) >= 2
    assert dec.violations(du.power_cap) == [] or all(v.startswith("shannon:") for v in dec.violations(du.power_cap))
    mid = dmcp_iterate(du, dem, AnswerTable(), BandState.MID_ONLY)
    assert mid.band == MIDBAND


def test_answer_table_rejects_increase():
    from mwiab.iab import AnswerRecord
    t = AnswerTable()
    assert t.accept(AnswerRecord(1, MMWAVE, 3, 400e6, {}, {}, (0.0, 5.0)))
    assert not t.accept(AnswerRecord(2, MMWAVE, 3, 400e6, {}, {}, (0.0, 6.0)))
    assert t.nonincreasing()


def test_subtree_demands(bundled):
    cpe = {t.id: 1e6 for t in bundled.cpes}
    dem = subtree_demands(bundled.terminals, cpe)
    mts = [t for t in bundled.terminals if t.kind is TerminalKind.IAB_MT]
    donor_children = [t for t in mts if t.parent_du_id == bundled.dus[0].id]
    # everything below the donor flows through its IAB-MT children or its own CPEs
    own = sum(1e6 for t in bundled.terminals_of(bundled.dus[0].id) if t.kind is TerminalKind.CPE)
    assert sum(dem[t.id] for t in donor_children) + own == pytest.approx(25e6)


def test_band_state_sampling():
    du = small_du(3)
    rng = np.random.default_rng(0)
    states = [du.band_state(rng) for _ in range(2000)]
    frac = sum(s is BandState.BOTH_AVAILABLE for s in states) / len(states)
    assert frac == pytest.approx(0.9 ** 3, abs=0.04)
