"""Shared domain types for the microwave backhaul / IAB access model."""

import enum
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from mwiab.tables import symbol_duration


class ScenarioError(ValueError):
    """Invalid scenario content (bad value, broken reference, parse failure)."""


class RadioState(enum.IntEnum):
    # Values are the sub-state indices k used for the x_{m,k} indicators.
    COMPLETELY_OFF = 2
    DEEP_SLEEP = 3
    STARTUP = 4
    WAKE_UP = 5
    SERVING = 6

    @property
    def is_on(self) -> bool:
        return self >= RadioState.STARTUP

    @property
    def physical_state(self) -> str:
        return "ON" if self.is_on else "OFF"

    @property
    def key(self) -> str:
        return self.name.lower()


ON_STATES = frozenset(s for s in RadioState if s.is_on)

DEFAULT_POWER_PROFILE = {
    RadioState.COMPLETELY_OFF: 0.0,
    RadioState.DEEP_SLEEP: 3.0,
    RadioState.STARTUP: 55.0,
    RadioState.WAKE_UP: 50.0,
    RadioState.SERVING: 80.0,
}
DEFAULT_STARTUP_DURATION = 60.0
DEFAULT_WAKEUP_DURATION = 10.0
SEVEN_DAYS = 7 * 24 * 3600.0


@dataclass
class RadioUnit:
    """One microwave radio: static configuration plus its controller state."""
    id: str
    band_ghz: float
    bandwidth_hz: float
    power_profile: Dict[RadioState, float] = field(
        default_factory=lambda: dict(DEFAULT_POWER_PROFILE))
    tx_power: float = 1.0
    tx_power_cap: float = 1.0
    startup_duration: float = DEFAULT_STARTUP_DURATION
    wakeup_duration: float = DEFAULT_WAKEUP_DURATION
    antenna_gain_dbi: float = 0.0
    noise_figure_db: float = 5.0
    link_distance_m: float = 1000.0
    state: RadioState = RadioState.SERVING
    time_in_state: float = 0.0
    idle_seconds: float = 0.0

    def __post_init__(self):
        self.power_profile = {RadioState(k): float(v) for k, v in self.power_profile.items()}
        self.validate()

    def validate(self):
        missing = set(RadioState) - set(self.power_profile)
        if missing:
            raise ScenarioError(f"radio {self.id}: power profile missing {sorted(s.key for s in missing)}")
        p = self.power_profile
        if p[RadioState.COMPLETELY_OFF] != 0:
            raise ScenarioError(f"radio {self.id}: completely_off power must be 0 W")
        if any(v < 0 for v in p.values()):
            raise ScenarioError(f"radio {self.id}: negative state power")
        if not p[RadioState.DEEP_SLEEP] < p[RadioState.SERVING]:
            raise ScenarioError(f"radio {self.id}: deep_sleep power must be below serving power")
        if p[RadioState.DEEP_SLEEP] <= 0:
            raise ScenarioError(f"radio {self.id}: deep_sleep power must be positive")
        if self.startup_duration <= 0 or self.wakeup_duration <= 0:
            raise ScenarioError(f"radio {self.id}: timers must be positive")
        if self.bandwidth_hz <= 0 or self.band_ghz <= 0:
            raise ScenarioError(f"radio {self.id}: band and bandwidth must be positive")
        if self.tx_power < 0 or self.tx_power_cap <= 0:
            raise ScenarioError(f"radio {self.id}: nonpositive transmit power")
        if self.link_distance_m <= 0:
            raise ScenarioError(f"radio {self.id}: nonpositive link distance")

    @property
    def idle_days(self) -> float:
        return self.idle_seconds / 86400.0

    def power(self, state: Optional[RadioState] = None) -> float:
        return self.power_profile[self.state if state is None else state]


@dataclass(frozen=True)
class PolicyThresholds:
    """Controller thresholds.  ``None`` sleep/wake thresholds are derived per
    radio from its capacity (sleep = capacity, wake = wake_fraction * capacity)."""
    sleep_threshold: Optional[float] = None
    wake_threshold: Optional[float] = None
    completely_off_period: float = SEVEN_DAYS
    rb_update_period_ms: float = 1000.0
    wake_fraction: float = 0.1

    def __post_init__(self):
        for name in ("sleep_threshold", "wake_threshold"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ScenarioError(f"thresholds: {name} must be positive")
        if self.completely_off_period <= 0 or self.rb_update_period_ms <= 0:
            raise ScenarioError("thresholds: periods must be positive")
        if not 0 < self.wake_fraction <= 1:
            raise ScenarioError("thresholds: wake_fraction must be in (0, 1]")
        if (self.sleep_threshold is not None and self.wake_threshold is not None
                and self.wake_threshold > self.sleep_threshold):
            raise ScenarioError("thresholds: wake threshold must not exceed sleep threshold")

    def sleep_for(self, capacity: float) -> float:
        return self.sleep_threshold if self.sleep_threshold is not None else capacity

    def wake_for(self, capacity: float) -> float:
        return self.wake_threshold if self.wake_threshold is not None else self.wake_fraction * capacity


@dataclass
class MicrowaveNode:
    id: str
    radios: List[RadioUnit]
    upstream_id: Optional[str] = None
    downstream_ids: Tuple[str, ...] = ()
    thresholds: PolicyThresholds = field(default_factory=PolicyThresholds)

    def __post_init__(self):
        if len(self.radios) < 1:
            raise ScenarioError(f"node {self.id}: node must have >=1 radio")

    def on_count(self) -> int:
        return sum(r.state.is_on for r in self.radios)


class BandState(enum.Enum):
    BOTH_AVAILABLE = "both"
    MID_ONLY = "mid_only"


@dataclass(frozen=True)
class BandAvailability:
    """Two-state band model: mmWave+mid-band with probability ``phi``,
    otherwise mid-band only."""
    phi: float
    current_state: BandState = BandState.BOTH_AVAILABLE

    def __post_init__(self):
        if not 0.0 <= self.phi <= 1.0:
            raise ScenarioError(f"band availability phi={self.phi} outside [0, 1]")

    @property
    def state_vector(self) -> Tuple[float, float]:
        return (self.phi, 1.0 - self.phi)


@dataclass(frozen=True)
class CarrierParams:
    num_carriers: int = 1
    layers: int = 4
    modulation_order: int = 8
    scaling: float = 1.0
    max_code_rate: float = 948 / 1024
    overhead: float = 0.14
    numerology: int = 1

    def __post_init__(self):
        if not 0 <= self.overhead < 1:
            raise ScenarioError("carrier: overhead must be in [0, 1)")
        if not 0 < self.max_code_rate <= 1:
            raise ScenarioError("carrier: max_code_rate must be in (0, 1]")
        if self.num_carriers < 1 or self.layers < 1 or self.modulation_order < 1 or self.scaling <= 0:
            raise ScenarioError("carrier: carriers, layers, modulation order and scaling must be positive")

    @property
    def symbol_duration(self) -> float:
        return symbol_duration(self.numerology)

    @property
    def re_bits(self) -> float:
        """Bits per resource element summed over carriers (layers included)."""
        return (self.num_carriers * self.layers * self.modulation_order * self.scaling
                * self.max_code_rate * (1 - self.overhead))


@dataclass(frozen=True)
class AccessBand:
    """An access carrier (mmWave or mid-band) together with the fixed
    (numerology, bandwidth) pair used by the non-adaptive baseline."""
    name: str
    carrier_ghz: float
    frequency_range: str
    params: CarrierParams
    fixed_numerology: int
    fixed_bandwidth_hz: float

    def __post_init__(self):
        if self.carrier_ghz <= 0:
            raise ScenarioError(f"carrier {self.name}: carrier frequency must be positive")
        if self.frequency_range not in ("FR1", "FR2"):
            raise ScenarioError(f"carrier {self.name}: frequency_range must be FR1 or FR2")


class TerminalKind(enum.Enum):
    CPE = "CPE"
    IAB_MT = "IAB-MT"


@dataclass(frozen=True)
class Terminal:
    id: str
    kind: TerminalKind
    parent_du_id: str
    distance_m: float
    band_availability: BandAvailability
    noise_figure_db: float = 7.0
    antenna_gain_dbi: float = 15.0
    site_id: Optional[str] = None
    share: float = 1.0
    child_du_id: Optional[str] = None

    def __post_init__(self):
        if self.distance_m <= 0:
            raise ScenarioError(f"terminal {self.id}: distance must be positive")
        if self.share < 0:
            raise ScenarioError(f"terminal {self.id}: negative share")


@dataclass(frozen=True)
class DuConfig:
    id: str
    node_id: Optional[str] = None
    power_cap: float = 40.0
    antenna_gain_dbi: float = 20.0


@dataclass
class MetricsRecord:
    tick: int
    node_power: Dict[str, float]
    node_rate: Dict[str, float]
    demand: float
    du_power: Dict[str, float]
    energy_efficiency: Optional[float]
    satisfied: bool


def energy_efficiency_or_none(rate: float, power: float) -> Optional[float]:
    return rate / power if power > 0 else None
