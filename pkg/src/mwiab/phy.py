"""Link-budget and 5G NR rate arithmetic.  All functions are pure.

Rates cross module boundaries in bit/s.  ``max_du_rate`` and
``rbs_required`` work in Mbps internally because the peak-rate formula
carries a 1e-6 factor.
"""

import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from mwiab.domain import CarrierParams
from mwiab.tables import McsEntry, subcarrier_spacing

SPEED_OF_LIGHT = 299792458.0
BOLTZMANN = 1.380649e-23
T0 = 290.0


class NoFeasibleMcs(ValueError):
    pass


class DivergentPowerControl(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class LinkBudget:
    gain_sq: float
    tx_power: float
    noise_power: float

    def __post_init__(self):
        if self.gain_sq < 0:
            raise ValueError("gain_sq must be nonnegative")
        if self.noise_power <= 0:
            raise ValueError("noise_power must be positive")
        if self.tx_power < 0:
            raise ValueError("tx_power must be nonnegative")


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


def snr(link: LinkBudget) -> float:
    """delta = |G|^2 P / sigma^2 (linear)."""
    return link.gain_sq * link.tx_power / link.noise_power


def shannon_rate(bandwidth_hz: float, delta: float) -> float:
    """Achievable rate in bit/s: bandwidth * log2(1 + delta)."""
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    if delta < 0:
        raise ValueError("snr must be nonnegative")
    return bandwidth_hz * math.log2(1.0 + delta)


def channel_gain(distance_m: float, carrier_hz: float,
                 antenna_gains_dbi: Tuple[float, float] = (0.0, 0.0)) -> float:
    """Free-space |G|^2 = G_tx G_rx (c / (4 pi d f))^2."""
    if distance_m <= 0 or carrier_hz <= 0:
        raise ValueError("distance and carrier must be positive")
    g = db_to_linear(antenna_gains_dbi[0]) * db_to_linear(antenna_gains_dbi[1])
    return g * (SPEED_OF_LIGHT / (4 * math.pi * distance_m * carrier_hz)) ** 2


def fspl_db(distance_m: float, carrier_hz: float) -> float:
    return -linear_to_db(channel_gain(distance_m, carrier_hz))


def thermal_noise(bandwidth_hz: float, noise_figure_db: float = 0.0) -> float:
    """k T0 B F in watts."""
    return BOLTZMANN * T0 * bandwidth_hz * db_to_linear(noise_figure_db)


def rb_bandwidth(mu: int, rb_count: int = 1) -> float:
    """Bandwidth of ``rb_count`` resource blocks: 12 subcarriers each."""
    return 12 * subcarrier_spacing(mu) * rb_count


def max_du_rate(params: CarrierParams, rb_budget: float, w: float = 1.0) -> float:
    """Peak DU rate in Mbps:
    1e-6 * J * nu * Q * l * R_max * (12 w beta / T_u) * (1 - OH)."""
    per_carrier = (params.layers * params.modulation_order * params.scaling * params.max_code_rate
                   * (12 * w * rb_budget / params.symbol_duration) * (1 - params.overhead))
    return 1e-6 * params.num_carriers * per_carrier


def rbs_required(demand_mbps: float, params: CarrierParams) -> int:
    """Smallest RB count whose peak rate covers ``demand_mbps``."""
    if demand_mbps < 0:
        raise ValueError("demand must be nonnegative")
    if demand_mbps == 0:
        return 0
    denom = params.num_carriers * (params.layers * params.modulation_order * params.scaling
                                   * 12 * params.max_code_rate * (1 - params.overhead))
    x = 1e6 * demand_mbps * params.symbol_duration / denom
    n = math.ceil(x)
    # guard the ceiling against float noise in either direction
    if n > 1 and max_du_rate(params, n - 1) >= demand_mbps:
        n -= 1
    while max_du_rate(params, n) < demand_mbps:
        n += 1
    return n


def params_for_mcs(params: CarrierParams, entry: McsEntry) -> CarrierParams:
    """Carrier parameters with (Q, R) replaced by an MCS entry's values."""
    return replace(params, modulation_order=entry.modulation_order, max_code_rate=entry.code_rate)


def mcs_rate(params: CarrierParams, entry: McsEntry, rb_count: int) -> float:
    """Rate in bit/s delivered by ``rb_count`` RBs at MCS ``entry``."""
    return 1e6 * max_du_rate(params_for_mcs(params, entry), rb_count)


def rbs_for_mcs(demand_bps: float, params: CarrierParams, entry: McsEntry) -> int:
    return rbs_required(demand_bps / 1e6, params_for_mcs(params, entry))


def select_mcs(table: Sequence[McsEntry], delta: float, demand_bps: float, rb_count: int,
               params: CarrierParams) -> Tuple[McsEntry, bool]:
    """Lowest-index MCS whose threshold is met by ``delta`` and whose rate at
    ``rb_count`` RBs covers the demand.  Returns ``(entry, underserved)``;
    when no entry covers the demand the highest reachable entry is returned
    with ``underserved=True``."""
    if not table:
        raise ValueError("empty MCS table")
    if delta < table[0].snr_threshold:
        raise NoFeasibleMcs(f"snr {delta:.4g} below the lowest threshold {table[0].snr_threshold:.4g}")
    best = None
    for e in table:
        if e.snr_threshold > delta:
            break
        best = e
        if mcs_rate(params, e, rb_count) >= demand_bps:
            return e, False
    return best, True


def update_tx_power(p: float, delta_actual: float, delta_target: float,
                    w: int = 1, kappa: int = 1, cap: Optional[float] = None) -> float:
    """p' = delta_target w kappa p / delta_actual, optionally clamped to ``cap``."""
    if delta_actual <= 0:
        raise DivergentPowerControl("actual snr is zero")
    out = delta_target * w * kappa * p / delta_actual
    if cap is not None:
        out = min(out, cap)
    return out


def power_for_snr(delta: float, gain_sq: float, noise_power: float) -> float:
    """Transmit power that yields ``delta`` over the given channel."""
    return delta * noise_power / gain_sq


def mcs_thresholds(table: Sequence[McsEntry]) -> np.ndarray:
    return np.array([e.snr_threshold for e in table])


def radio_capacity(radio) -> float:
    """Shannon capacity (bit/s) of a point-to-point microwave radio whose two
    ends use the same antenna gain and noise figure."""
    gain = channel_gain(radio.link_distance_m, radio.band_ghz * 1e9,
                        (radio.antenna_gain_dbi, radio.antenna_gain_dbi))
    noise = thermal_noise(radio.bandwidth_hz, radio.noise_figure_db)
    return shannon_rate(radio.bandwidth_hz, snr(LinkBudget(gain, radio.tx_power, noise)))


def capacities(radios: List) -> np.ndarray:
    return np.array([radio_capacity(r) for r in radios])
