"""
Embedded 5G NR constant tables: maximum transmission bandwidth configuration
(N_RB per numerology and channel bandwidth) and the PDSCH MCS table used for
link adaptation.
"""

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np


class UnknownNumerology(KeyError):
    pass


# (mu, channel bandwidth MHz) -> N_RB.  FR1 from TS 38.101-1 Table 5.3.2-1,
# FR2 from TS 38.101-2 Table 5.3.2-1 (120 kHz and the 480 kHz extension).
_FR1: Dict[int, Dict[int, int]] = {
    0: {10: 52, 15: 79, 20: 106, 25: 133, 30: 160, 40: 216, 50: 270},
    1: {10: 24, 15: 38, 20: 51, 25: 65, 30: 78, 40: 106, 50: 133, 60: 162,
        70: 189, 80: 217, 90: 245, 100: 273},
    2: {10: 11, 15: 18, 20: 24, 25: 31, 30: 38, 40: 51, 50: 65, 60: 79,
        70: 93, 80: 107, 90: 121, 100: 135},
}
_FR2: Dict[int, Dict[int, int]] = {
    3: {50: 32, 100: 66, 200: 132, 400: 264},
    5: {400: 66, 800: 124, 1600: 248},
}


def subcarrier_spacing(mu: int) -> float:
    """Subcarrier spacing in Hz for numerology ``mu``."""
    return 15e3 * 2 ** mu


def symbol_duration(mu: int) -> float:
    """Average OFDM symbol duration: 14 symbols per slot, 2**mu slots per ms."""
    return 1e-3 / (14 * 2 ** mu)


@dataclass(frozen=True, order=True)
class NumerologyEntry:
    mu: int
    bandwidth_hz: float
    n_rb: int
    frequency_range: str

    @property
    def occupied_bandwidth(self) -> float:
        return 12 * subcarrier_spacing(self.mu) * self.n_rb


class NumerologyTable:
    """Lookup of the maximum RB count for a (numerology, bandwidth) pair."""

    def __init__(self, entries: List[NumerologyEntry]):
        self.entries = sorted(entries)
        self._index = {(e.mu, int(round(e.bandwidth_hz))): e for e in self.entries}

    def entry(self, mu: int, bandwidth_hz: float) -> NumerologyEntry:
        try:
            return self._index[(mu, int(round(bandwidth_hz)))]
        except KeyError:
            raise UnknownNumerology(
                f"no RB budget for mu={mu}, bandwidth={bandwidth_hz / 1e6:g} MHz") from None

    def for_range(self, frequency_range: str) -> List[NumerologyEntry]:
        return [e for e in self.entries if e.frequency_range == frequency_range]

    def numerologies(self) -> List[int]:
        return sorted({e.mu for e in self.entries})

    def __contains__(self, key: Tuple[int, float]) -> bool:
        mu, bw = key
        return (mu, int(round(bw))) in self._index

    def __len__(self):
        return len(self.entries)


def _build_numerology_table() -> NumerologyTable:
    entries = []
    for fr, table in (("FR1", _FR1), ("FR2", _FR2)):
        for mu, row in table.items():
            for bw_mhz, n_rb in row.items():
                entries.append(NumerologyEntry(mu, bw_mhz * 1e6, n_rb, fr))
    return NumerologyTable(entries)


NUMEROLOGY_TABLE = _build_numerology_table()


def lookup_rb_budget(table: NumerologyTable, mu: int, bandwidth_hz: float) -> int:
    return table.entry(mu, bandwidth_hz).n_rb


@dataclass(frozen=True)
class McsEntry:
    index: int
    modulation_order: int
    code_rate: float
    snr_threshold: float  # linear

    @property
    def spectral_efficiency(self) -> float:
        return self.modulation_order * self.code_rate

    @property
    def snr_threshold_db(self) -> float:
        return 10 * np.log10(self.snr_threshold)


# TS 38.214 Table 5.1.3.1-3 (Qm, R x 1024).  Unlike Table 5.1.3.1-1 it has
# strictly increasing spectral efficiency across the modulation boundaries.
_MCS_ROWS = [
    (2, 30), (2, 40), (2, 50), (2, 64), (2, 78), (2, 99), (2, 120), (2, 157),
    (2, 193), (2, 251), (2, 308), (2, 379), (2, 449), (2, 526), (2, 602),
    (4, 340), (4, 378), (4, 434), (4, 490), (4, 553), (4, 616),
    (6, 438), (6, 466), (6, 517), (6, 567), (6, 616), (6, 666), (6, 719), (6, 772),
]

# SNR thresholds follow the attenuated Shannon bound SE = 0.75 log2(1 + SNR),
# tabulated in dB with 0.1 dB resolution.
SHANNON_ATTENUATION = 0.75


def _threshold_db(se: float) -> float:
    return round(10 * np.log10(2 ** (se / SHANNON_ATTENUATION) - 1), 1)


MCS_THRESHOLDS_DB = [_threshold_db(q * r / 1024) for q, r in _MCS_ROWS]


def build_mcs_table(rows=_MCS_ROWS, thresholds_db=None) -> List[McsEntry]:
    if thresholds_db is None:
        thresholds_db = [_threshold_db(q * r / 1024) for q, r in rows]
    return [McsEntry(i, q, r / 1024, float(10 ** (t / 10)))
            for i, ((q, r), t) in enumerate(zip(rows, thresholds_db))]


MCS_TABLE = build_mcs_table()
MID_TABLE_INDEX = len(MCS_TABLE) // 2
