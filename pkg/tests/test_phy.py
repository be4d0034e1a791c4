import math

import pytest
from hypothesis import given, strategies as st

from mwiab.domain import CarrierParams, RadioUnit
from mwiab.phy import (DivergentPowerControl, LinkBudget, NoFeasibleMcs, channel_gain, fspl_db, max_du_rate,
                       mcs_rate, power_for_snr, radio_capacity, rbs_required, select_mcs, shannon_rate, snr,
                       thermal_noise, update_tx_power)
from mwiab.tables import MCS_TABLE

from tests import oracles

FR2 = CarrierParams(layers=4, modulation_order=8, scaling=1.0, max_code_rate=948 / 1024,
                    overhead=0.18, numerology=3)
FR1 = CarrierParams(layers=4, modulation_order=8, scaling=1.0, max_code_rate=948 / 1024,
                    overhead=0.14, numerology=1)


def _kw(p):
    return dict(layers=p.layers, q=p.modulation_order, scaling=p.scaling, r=p.max_code_rate,
                overhead=p.overhead, mu=p.numerology, carriers=p.num_carriers)


def test_dmax_fixture():
    v = max_du_rate(FR2, 264)
    assert v == pytest.approx(8619.4, rel=1e-3)
    assert v == pytest.approx(oracles.dmax_mbps(rbs=264, **_kw(FR2)), rel=1e-12)


def test_rbs_required_fixture():
    assert rbs_required(100.0, FR1) == 12
    assert rbs_required(100.0, FR1) == oracles.rbs_scan(100.0, **_kw(FR1))


def test_rbs_required_zero_and_negative():
    assert rbs_required(0.0, FR1) == 0
    with pytest.raises(ValueError):
        rbs_required(-1.0, FR1)


params = st.builds(CarrierParams, num_carriers=st.integers(1, 3), layers=st.integers(1, 8),
                   modulation_order=st.sampled_from([2, 4, 6, 8]), scaling=st.sampled_from([0.4, 0.75, 0.8, 1.0]),
                   max_code_rate=st.floats(0.05, 1.0), overhead=st.floats(0.0, 0.5),
                   numerology=st.integers(0, 5))


@given(params, st.floats(0.001, 5000.0))
def test_rbs_required_is_tight(p, demand):
    n = rbs_required(demand, p)
    assert max_du_rate(p, n) >= demand
    assert n == 0 or max_du_rate(p, n - 1) < demand


@given(params, st.integers(0, 3300))
def test_dmax_matches_oracle(p, rbs):
    assert max_du_rate(p, rbs) == pytest.approx(oracles.dmax_mbps(rbs=rbs, **_kw(p)), rel=1e-12, abs=1e-12)


@given(params, st.integers(1, 3000), st.integers(1, 3000))
def test_dmax_monotone_in_rbs(p, a, b):
    lo, hi = sorted((a, b))
    assert max_du_rate(p, lo) <= max_du_rate(p, hi)


def test_fspl_worked_example():
    # 42 GHz over 29.6 km
    assert fspl_db(29600, 42e9) == pytest.approx(154.3, abs=0.05)
    assert fspl_db(29600, 42e9) == pytest.approx(oracles.fspl_db(29600, 42e9), abs=0.01)


@given(st.floats(1.0, 1e5), st.floats(1e8, 1e11))
def test_fspl_matches_oracle(d, f):
    assert fspl_db(d, f) == pytest.approx(oracles.fspl_db(d, f), abs=0.01)


def test_channel_gain_rejects_bad_inputs():
    with pytest.raises(ValueError):
        channel_gain(0, 1e9)
    with pytest.raises(ValueError):
        channel_gain(10, -1)


def test_snr_and_shannon():
    link = LinkBudget(gain_sq=1e-10, tx_power=1.0, noise_power=1e-12)
    assert snr(link) == pytest.approx(100.0)
    assert shannon_rate(1e6, 1.0) == pytest.approx(1e6)
    assert shannon_rate(1e6, 0.0) == 0.0
    with pytest.raises(ValueError):
        LinkBudget(1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        shannon_rate(0, 1)


@given(st.floats(1e3, 1e9), st.floats(0, 1e4), st.floats(0, 1e4))
def test_shannon_monotone(bw, a, b):
    lo, hi = sorted((a, b))
    assert shannon_rate(bw, lo) <= shannon_rate(bw, hi)


def test_thermal_noise():
    assert thermal_noise(1.0) == pytest.approx(1.380649e-23 * 290)
    assert thermal_noise(1e6, 10.0) == pytest.approx(10 * thermal_noise(1e6))


def test_select_mcs_picks_lowest_sufficient():
    delta = MCS_TABLE[-1].snr_threshold * 2
    e, under = select_mcs(MCS_TABLE, delta, 50e6, 20, FR1)
    assert not under
    assert mcs_rate(FR1, e, 20) >= 50e6
    if e.index > 0:
        assert mcs_rate(FR1, MCS_TABLE[e.index - 1], 20) < 50e6


def test_select_mcs_underserved_and_infeasible():
    e, under = select_mcs(MCS_TABLE, MCS_TABLE[3].snr_threshold, 1e12, 1, FR1)
    assert under and e.index == 3
    with pytest.raises(NoFeasibleMcs):
        select_mcs(MCS_TABLE, MCS_TABLE[0].snr_threshold / 2, 1e6, 10, FR1)
    with pytest.raises(ValueError):
        select_mcs([], 1.0, 1.0, 1, FR1)


@given(st.floats(0.1, 2000.0), st.floats(1e5, 2e9), st.integers(1, 273))
def test_select_mcs_matches_scan(delta, demand, rbs):
    if delta < MCS_TABLE[0].snr_threshold:
        return
    got = select_mcs(MCS_TABLE, delta, demand, rbs, FR1)
    want = oracles.mcs_scan(MCS_TABLE, delta, demand, rbs, layers=FR1.layers, scaling=FR1.scaling,
                            overhead=FR1.overhead, mu=FR1.numerology)
    assert got == want


def test_update_tx_power_examples():
    assert update_tx_power(1.0, 20.0, 10.0) == pytest.approx(0.5)
    assert update_tx_power(1.0, 5.0, 10.0) == pytest.approx(2.0)
    assert update_tx_power(1.0, 5.0, 10.0, cap=1.5) == 1.5
    assert update_tx_power(1.0, 5.0, 10.0, w=0) == 0.0
    with pytest.raises(DivergentPowerControl):
        update_tx_power(1.0, 0.0, 10.0)


@given(st.floats(1e-3, 10.0), st.floats(1e-3, 1e4), st.floats(1e-3, 1e4))
def test_power_update_hits_target(p, actual, target):
    # received SNR scales linearly with power, so one update lands on target
    new = update_tx_power(p, actual, target)
    assert actual * new / p == pytest.approx(target, rel=1e-9)


def test_power_for_snr_inverts_snr():
    g, n = 1e-9, 1e-13
    p = power_for_snr(50.0, g, n)
    assert snr(LinkBudget(g, p, n)) == pytest.approx(50.0)


def test_bundled_radio_capacities(bundled):
    caps = [radio_capacity(r) for r in bundled.root_nodes[0].radios]
    assert caps[0] == pytest.approx(0.5135e9, rel=2e-3)
    assert caps[1] == pytest.approx(1.982e9, rel=2e-3)
    r = bundled.root_nodes[0].radios[1]
    g = 10 ** (2 * r.antenna_gain_dbi / 10) * 10 ** (-oracles.fspl_db(r.link_distance_m, r.band_ghz * 1e9) / 10)
    noise = 1.380649e-23 * 290 * r.bandwidth_hz * 10 ** (r.noise_figure_db / 10)
    want = r.bandwidth_hz * math.log2(1 + g * r.tx_power / noise)
    assert caps[1] == pytest.approx(want, rel=1e-3)


def test_capacity_falls_with_distance():
    near = RadioUnit("a", 42.0, 500e6, link_distance_m=1000.0)
    far = RadioUnit("b", 42.0, 500e6, link_distance_m=5000.0)
    assert radio_capacity(far) < radio_capacity(near)
