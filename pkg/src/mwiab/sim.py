"""
Discrete-time closed loop: demand -> microwave policy -> IAB allocation ->
metrics.

The microwave side and the access side are simulated in two passes over
the same tick grid.  The access pass is optional (``iab_period=0``
disables it) because a full week of per-tick allocation is expensive.
Policies:

- ``proposed``: threshold controller on each root node, guarded by the
  dual optimizer's target serving set; downstream nodes follow.
- ``baseline1``: every radio serving for the whole horizon.
- ``baseline2``: direct Serving/DeepSleep/CompletelyOff moves, supporting
  radio brought up at 90% utilization, smaller radio put to sleep after a
  dwell period below 45%, no radio changes within the dwell of its last change.
"""

import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np

from mwiab import __version__
from mwiab.domain import (BandAvailability, MetricsRecord, MicrowaveNode, RadioState,
                          energy_efficiency_or_none)
from mwiab.dual import DualPolicy, MonitoringCost, RadioSpec
from mwiab.fsm import (ActionKind, ControllerConfig, FiredTransition, check_fired, step_controller,
                       step_follower)
from mwiab.iab import (MIDBAND, MMWAVE, AnswerTable, IabDu, allocate, dmcp_iterate, period_update,
                       select_band, subtree_demands)
from mwiab.phy import capacities, rb_bandwidth
from mwiab.scenario import Scenario, dumps_scenario
from mwiab.tables import MID_TABLE_INDEX
from mwiab.traffic import DemandSeries, augment, site_map_from_scenario, to_demand

POLICIES = ("proposed", "baseline1", "baseline2")
B2_WAKE_UTIL = 0.9
B2_SLEEP_UTIL = 0.45
B2_DWELL = 7200.0
STATE_CODES = {s: int(s) for s in RadioState}


class SimulationError(RuntimeError):
    pass


@dataclass
class SimulationConfig:
    scenario: Scenario
    demand: DemandSeries
    policy: str = "proposed"
    dt: float = 1.0
    horizon: Optional[int] = None
    seed: int = 0
    xi: float = 5e-8
    bucket_bps: float = 10e6
    iab_period: int = 0          # ticks between IAB allocations; 0 disables
    iab_mode: str = "adaptive"   # or "fixed"
    iab_start: int = 0
    p_fail_startup: float = 0.0
    p_fail_wakeup: float = 0.0
    moisture_seconds: float = 600.0
    max_infeasible_fraction: float = 0.0

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}; expected one of {', '.join(POLICIES)}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.horizon is None:
            self.horizon = len(self.demand)
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.horizon > len(self.demand):
            raise ValueError(f"horizon {self.horizon} exceeds demand length {len(self.demand)}")
        if self.iab_period < 0:
            raise ValueError("iab_period must be >= 0")
        if self.iab_mode not in ("adaptive", "fixed"):
            raise ValueError("iab_mode must be 'adaptive' or 'fixed'")

    def settings(self) -> Dict[str, object]:
        """Every scalar knob, for provenance and hashing."""
        return {"policy": self.policy, "dt": self.dt, "horizon": self.horizon, "seed": self.seed,
                "xi": self.xi, "bucket_bps": self.bucket_bps, "iab_period": self.iab_period,
                "iab_mode": self.iab_mode, "iab_start": self.iab_start,
                "p_fail_startup": self.p_fail_startup, "p_fail_wakeup": self.p_fail_wakeup,
                "moisture_seconds": self.moisture_seconds,
                "max_infeasible_fraction": self.max_infeasible_fraction}

    def config_hash(self) -> str:
        h = hashlib.sha256()
        h.update(dumps_scenario(self.scenario).encode())
        h.update(json.dumps(self.settings(), sort_keys=True).encode())
        h.update(np.ascontiguousarray(self.demand.site_rates[:self.horizon]).tobytes())
        h.update(np.ascontiguousarray(self.demand.shares).tobytes())
        return h.hexdigest()[:16]


def build_demand(scenario: Scenario, trace, seed: int = 0, packet_size: float = 12000.0,
                 jitter: Optional[float] = None) -> DemandSeries:
    """Augment a 15-minute count trace with ``seed`` and map it onto the
    scenario's CPEs.  A trace already at 1 s is used as is."""
    if trace.resolution != 1.0:
        trace = augment(trace, seed) if jitter is None else augment(trace, seed, jitter)
    return to_demand(trace, packet_size, site_map_from_scenario(scenario))


@dataclass
class RunReport:
    policy: str
    seed: int
    dt: float
    node_ids: List[str]
    radio_ids: List[List[str]]
    demand: np.ndarray             # (T,) bit/s
    delivered: np.ndarray          # (T,) bit/s
    node_power: np.ndarray         # (T, N) W, state powers
    states: np.ndarray             # (T, N, M) RadioState codes after each tick
    grace: np.ndarray              # (T,) bool
    monitoring_energy: np.ndarray  # (N,) J
    moisture_energy: np.ndarray    # (N,) J
    transitions: List[FiredTransition]
    all_on_capacity: float
    du_ids: List[str] = field(default_factory=list)
    du_power: Optional[np.ndarray] = None  # (T, K) W, NaN where not simulated
    iab_log: List[str] = field(default_factory=list)
    iab_violations: List[str] = field(default_factory=list)
    iab_unserved: int = 0
    provenance: Dict[str, object] = field(default_factory=dict)
    annotations: List[str] = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return len(self.demand)

    @property
    def satisfied(self) -> np.ndarray:
        return self.delivered >= self.demand * (1 - 1e-12)

    @property
    def infeasible(self) -> np.ndarray:
        return self.demand > self.all_on_capacity

    @property
    def energy_per_node(self) -> np.ndarray:
        return self.node_power.sum(axis=0) * self.dt + self.monitoring_energy + self.moisture_energy

    @property
    def microwave_energy(self) -> float:
        return float(self.energy_per_node.sum())

    @property
    def du_energy(self) -> float:
        if self.du_power is None:
            return 0.0
        return float(np.nansum(self.du_power) * self.dt)

    @property
    def total_energy(self) -> float:
        return self.microwave_energy + self.du_energy

    def energy_efficiency(self) -> np.ndarray:
        """Delivered bit/s per watt at every tick."""
        p = self.node_power.sum(axis=1)
        if self.du_power is not None:
            p = p + np.nan_to_num(self.du_power).sum(axis=1)
        return np.divide(self.delivered, p, out=np.zeros_like(p), where=p > 0)

    @property
    def mean_energy_efficiency(self) -> float:
        bits = float(self.delivered.sum() * self.dt)
        return bits / self.total_energy if self.total_energy > 0 else 0.0

    def records(self) -> Iterator[MetricsRecord]:
        p = self.node_power.sum(axis=1)
        if self.du_power is not None:
            p = p + np.nan_to_num(self.du_power).sum(axis=1)
        sat = self.satisfied
        for t in range(self.horizon):
            du = {} if self.du_power is None else {
                d: float(self.du_power[t, k]) for k, d in enumerate(self.du_ids)
                if not math.isnan(self.du_power[t, k])}
            yield MetricsRecord(t, {n: float(self.node_power[t, i]) for i, n in enumerate(self.node_ids)},
                                {self.node_ids[0]: float(self.delivered[t])}, float(self.demand[t]),
                                du, energy_efficiency_or_none(float(self.delivered[t]), float(p[t])),
                                bool(sat[t]))

    def recompute_energy(self, profiles: Sequence[Sequence[Dict[RadioState, float]]]) -> np.ndarray:
        """Per-node energy rebuilt from the recorded states."""
        out = np.zeros(len(self.node_ids))
        for i, prof in enumerate(profiles):
            for m, p in enumerate(prof):
                table = np.zeros(max(STATE_CODES.values()) + 1)
                for s, w in p.items():
                    table[int(s)] = w
                out[i] += table[self.states[:, i, m]].sum() * self.dt
        return out + self.monitoring_energy + self.moisture_energy


# --------------------------------------------------------------------------
# Topology helpers

def _ordered_nodes(scenario: Scenario) -> List[MicrowaveNode]:
    """Roots first, then breadth-first down the upstream->downstream links."""
    out, queue = [], list(scenario.root_nodes)
    seen = set()
    while queue:
        n = queue.pop(0)
        if n.id in seen:
            continue
        seen.add(n.id)
        out.append(n)
        queue.extend(scenario.node(d) for d in n.downstream_ids)
    out.extend(n for n in scenario.nodes if n.id not in seen)
    return out


def _root_of(scenario: Scenario, node: MicrowaveNode) -> MicrowaveNode:
    while node.upstream_id is not None:
        node = scenario.node(node.upstream_id)
    return node


# --------------------------------------------------------------------------
# Microwave pass

def radio_specs(node: MicrowaveNode, caps: np.ndarray) -> List[RadioSpec]:
    return [RadioSpec(float(c), r.power_profile[RadioState.SERVING], r.power_profile[RadioState.DEEP_SLEEP],
                      r.tx_power, r.tx_power_cap) for r, c in zip(node.radios, caps)]


def _baseline1(nodes, demand, dt):
    T = len(demand)
    n_m = max(len(n.radios) for n in nodes)
    states = np.full((T, len(nodes), n_m), int(RadioState.SERVING), dtype=np.int8)
    power = np.tile([sum(r.power_profile[RadioState.SERVING] for r in n.radios) for n in nodes], (T, 1))
    return states, power.astype(float), np.zeros(len(nodes)), np.zeros(len(nodes)), [], np.zeros(T, bool)


def _proposed(cfg: SimulationConfig, nodes, caps, demand, rng):
    T, dt = len(demand), cfg.dt
    ctrl = ControllerConfig(cfg.p_fail_startup, cfg.p_fail_wakeup, cfg.moisture_seconds)
    n_m = max(len(n.radios) for n in nodes)
    states = np.zeros((T, len(nodes), n_m), dtype=np.int8)
    power = np.zeros((T, len(nodes)))
    moisture = np.zeros(len(nodes))
    woke = np.zeros(T, bool)
    log: List[FiredTransition] = []
    policies, monitoring = {}, np.zeros(len(nodes))
    for i, n in enumerate(nodes):
        mon = MonitoringCost.for_node(len(n.radios), cfg.xi)
        monitoring[i] = mon.energy * T
        if n.upstream_id is None:
            policies[n.id] = DualPolicy(radio_specs(n, caps[n.id]), mon, cfg.bucket_bps, dt)
    # followers read their upstream peer's states from the previous tick
    previous = {n.id: [r.state for r in n.radios] for n in nodes}
    for t in range(T):
        d = float(demand[t])
        current = {}
        for i, n in enumerate(nodes):
            if n.upstream_id is None:
                keep = policies[n.id].target_set(d)
                res = step_controller(n, d, dt, rng, caps[n.id], t, ctrl, keep)
            else:
                res = step_follower(n, previous[n.upstream_id], dt, rng, t, ctrl)
            current[n.id] = res.states
            states[t, i, :len(res.states)] = res.states
            power[t, i] = res.power
            moisture[i] += res.moisture_energy
            if res.fired:
                log.extend(res.fired)
            woke[t] |= res.woke
        previous = current
    return states, power, monitoring, moisture, log, woke


def _b2_apply(node, radio, new_state, action, t, log):
    log.append(FiredTransition(t, node.id, radio.id, radio.state, action, new_state, "b2"))
    radio.state = new_state
    radio.time_in_state = 0.0
    radio.idle_seconds = 0.0


_B2_ACTION = {
    (RadioState.DEEP_SLEEP, RadioState.SERVING): ActionKind.WAKE_UP_COMPLETE,
    (RadioState.COMPLETELY_OFF, RadioState.SERVING): ActionKind.STARTUP_COMPLETE,
    (RadioState.SERVING, RadioState.DEEP_SLEEP): ActionKind.GO_DEEP_SLEEP,
    (RadioState.DEEP_SLEEP, RadioState.COMPLETELY_OFF): ActionKind.GO_COMPLETELY_OFF,
}


def _b2_move(node, radio, new_state, t, log):
    _b2_apply(node, radio, new_state, _B2_ACTION[(radio.state, new_state)], t, log)


def _baseline2(cfg: SimulationConfig, nodes, caps, demand):
    T, dt = len(demand), cfg.dt
    n_m = max(len(n.radios) for n in nodes)
    states = np.zeros((T, len(nodes), n_m), dtype=np.int8)
    power = np.zeros((T, len(nodes)))
    moisture = np.zeros(len(nodes))
    woke = np.zeros(T, bool)
    log: List[FiredTransition] = []
    # radios start with the dwell already satisfied
    for n in nodes:
        for r in n.radios:
            r.time_in_state = B2_DWELL
    low_since = {n.id: 0.0 for n in nodes}
    SV, DS, CO = RadioState.SERVING, RadioState.DEEP_SLEEP, RadioState.COMPLETELY_OFF
    for t in range(T):
        d = float(demand[t])
        previous = {n.id: [r.state for r in n.radios] for n in nodes}
        for i, n in enumerate(nodes):
            c = caps[n.id]
            for r in n.radios:
                r.time_in_state += dt
                if r.state == DS:
                    before = r.idle_seconds
                    r.idle_seconds += dt
                    if cfg.moisture_seconds > 0 and int(r.idle_seconds // 86400) > int(before // 86400):
                        moisture[i] += cfg.moisture_seconds * r.power_profile[RadioState.STARTUP]
                    if r.idle_seconds >= n.thresholds.completely_off_period:
                        _b2_move(n, r, CO, t, log)
            if n.upstream_id is None:
                serving_cap = sum(c[m] for m, r in enumerate(n.radios) if r.state == SV)
                util = d / serving_cap if serving_cap > 0 else math.inf
                ready = [m for m, r in enumerate(n.radios) if r.time_in_state >= B2_DWELL]
                if util >= B2_WAKE_UTIL:
                    low_since[n.id] = 0.0
                    cand = [m for m in ready if n.radios[m].state != SV]
                    if cand:
                        m = max(cand, key=lambda k: (c[k], -k))
                        _b2_move(n, n.radios[m], SV, t, log)
                        woke[t] = True
                elif util < B2_SLEEP_UTIL:
                    low_since[n.id] += dt
                    on = [m for m, r in enumerate(n.radios) if r.state == SV]
                    cand = [m for m in on if m in ready]
                    if low_since[n.id] >= B2_DWELL and len(on) > 1 and cand:
                        m = min(cand, key=lambda k: (c[k], k))
                        if serving_cap - c[m] >= d:
                            _b2_move(n, n.radios[m], DS, t, log)
                            low_since[n.id] = 0.0
                else:
                    low_since[n.id] = 0.0
            else:
                for r, u in zip(n.radios, previous[n.upstream_id]):
                    if u == SV and r.state != SV:
                        _b2_move(n, r, SV, t, log)
                        woke[t] = True
                    elif u == DS and r.state == SV:
                        _b2_move(n, r, DS, t, log)
                    elif u == CO and r.state == DS:
                        _b2_move(n, r, CO, t, log)
            for m, r in enumerate(n.radios):
                states[t, i, m] = int(r.state)
            power[t, i] = sum(r.power_profile[r.state] for r in n.radios)
    return states, power, np.zeros(len(nodes)), moisture, log, woke


def _delivered(states: np.ndarray, nodes, caps, demand) -> np.ndarray:
    """Capacity of every radio serving at both ends of its link, capped at D."""
    root = nodes[0]
    c = np.asarray(caps[root.id])
    both = np.all(states[:, :, :len(c)] == int(RadioState.SERVING), axis=1)
    return np.minimum(both @ c, demand)


def _grace_mask(trigger: np.ndarray, width: int) -> np.ndarray:
    """Ticks in [trigger, trigger + width] for every trigger tick."""
    T = len(trigger)
    diff = np.zeros(T + 1, dtype=np.int64)
    for t in np.flatnonzero(trigger):
        diff[t] += 1
        diff[min(T, t + width + 1)] -= 1
    return np.cumsum(diff[:T]) > 0


# --------------------------------------------------------------------------
# Access pass

def _iab_pass(cfg: SimulationConfig, scenario: Scenario, report: RunReport):
    T = report.horizon
    adaptive = cfg.iab_mode == "adaptive"
    dus = [IabDu(d, scenario.terminals_of(d.id), scenario.carriers, adaptive=adaptive) for d in scenario.dus]
    report.du_ids = [d.id for d in dus]
    report.du_power = np.full((T, len(dus)), np.nan)
    band_rng = np.random.default_rng([cfg.seed, 1])
    period_ticks = max(1, int(round(scenario.thresholds.rb_update_period_ms / 1000.0 / cfg.dt)))
    since_update = 0
    current = np.zeros(len(dus))
    used: List[Dict[str, float]] = [{} for _ in dus]
    for t in range(cfg.iab_start, T):
        if (t - cfg.iab_start) % cfg.iab_period == 0:
            demands = subtree_demands(scenario.terminals, cfg.demand.by_terminal(t))
            for k, du in enumerate(dus):
                state = du.band_state(band_rng)
                if adaptive:
                    dec = dmcp_iterate(du, demands, AnswerTable(), state, cfg.dt)
                else:
                    y_mm, _ = select_band(BandAvailability(0.5, state))
                    dec = allocate(du, demands, band=MMWAVE if y_mm else MIDBAND, fixed_mcs=MID_TABLE_INDEX)
                bad = dec.violations(du.power_cap)
                report.iab_violations.extend(f"{t},{du.id},{v}" for v in bad if not v.startswith("shannon:"))
                report.iab_unserved += len(dec.unserved)
                report.iab_log.extend(dec.log_lines(t))
                current[k] = dec.total_power
                used[k][dec.band] = rb_bandwidth(dec.mu, dec.rbs_used)
                if adaptive:
                    offered = sum(a.demand for a in dec.allocations.values()) + dec.unserved_demand
                    du.tracker.record(dec.band, dec.utilization, offered, du.mid_table_capacity(dec.band))
            since_update += 1
            if adaptive and since_update >= period_ticks:
                for k, du in enumerate(dus):
                    period_update(du, used[k])
                since_update = 0
        report.du_power[t] = current


# --------------------------------------------------------------------------
# Entry points

def run(config: SimulationConfig, flags: Optional[Dict[str, str]] = None) -> RunReport:
    """Simulate ``config.horizon`` ticks.  The scenario is copied, so the
    caller's object is never mutated."""
    cfg = config
    scenario = cfg.scenario.copy()
    nodes = _ordered_nodes(scenario)
    T = cfg.horizon
    demand = np.asarray(cfg.demand.aggregate[:T], dtype=float)
    caps = {n.id: capacities(_root_of(scenario, n).radios) for n in nodes}
    rng = np.random.default_rng(cfg.seed)

    if cfg.policy == "baseline1":
        out = _baseline1(nodes, demand, cfg.dt)
    elif cfg.policy == "proposed":
        out = _proposed(cfg, nodes, caps, demand, rng)
    else:
        out = _baseline2(cfg, nodes, caps, demand)
    states, power, monitoring, moisture, log, woke = out

    width = int(math.ceil(max(max(r.startup_duration, r.wakeup_duration)
                              for n in nodes for r in n.radios) / cfg.dt))
    all_on = float(np.sum(caps[nodes[0].id]))
    report = RunReport(cfg.policy, cfg.seed, cfg.dt, [n.id for n in nodes],
                       [[r.id for r in n.radios] for n in nodes], demand,
                       _delivered(states, nodes, caps, demand), power, states,
                       _grace_mask(woke, width), monitoring, moisture, log, all_on)
    if cfg.iab_period > 0:
        _iab_pass(cfg, scenario, report)
    report.provenance = provenance(cfg, flags)

    illegal = check_fired(f for f in log if f.label != "b2")
    if illegal:
        raise SimulationError(f"illegal transition fired: {illegal[0]}")
    frac = float(report.infeasible.mean())
    if frac > 0:
        report.annotations.append(
            f"infeasible: demand exceeds all-on capacity at {int(report.infeasible.sum())} tick(s)")
        if frac > cfg.max_infeasible_fraction:
            report.annotations.append(
                f"infeasible fraction {frac:.4g} above the configured {cfg.max_infeasible_fraction:g}")
    return report


def satisfaction(report: RunReport, grace: bool = True) -> float:
    """Fraction of ticks whose delivered rate covers D(t); with ``grace``
    the ticks inside a wake-up/startup latency window are left out."""
    sat = report.satisfied
    if grace:
        keep = ~report.grace
        if not keep.any():
            return 1.0
        return float(sat[keep].mean())
    return float(sat.mean())


@dataclass
class ComparisonRow:
    policy: str
    energy: float
    saving: float
    energy_efficiency: float
    satisfaction: float
    satisfaction_raw: float


def compare(reports: Dict[str, RunReport]) -> List[ComparisonRow]:
    """Per-policy energy, savings against Baseline 1, EE and satisfaction,
    ordered by energy."""
    if not reports:
        raise ValueError("no reports to compare")
    horizons = {r.horizon for r in reports.values()}
    if len(horizons) != 1:
        raise ValueError(f"mismatched horizons: {sorted(horizons)}")
    ref = reports.get("baseline1")
    if ref is None:
        raise ValueError("comparison needs a baseline1 report")
    rows = [ComparisonRow(p, float(r.total_energy), float(ref.total_energy - r.total_energy),
                          float(r.mean_energy_efficiency), float(satisfaction(r, True)),
                          float(satisfaction(r, False))) for p, r in reports.items()]
    rows.sort(key=lambda r: (r.energy, r.policy))
    return rows


# --------------------------------------------------------------------------
# Exports

def provenance(cfg: SimulationConfig, flags: Optional[Dict[str, str]] = None) -> Dict[str, object]:
    return {"tool": "mwiab", "version": __version__, "config_hash": cfg.config_hash(),
            "seed": cfg.seed, "scenario": cfg.scenario.name, "settings": cfg.settings(),
            "flags": dict(flags or {})}


def header_lines(prov: Dict[str, object]) -> str:
    return "".join(f"# {k}: {json.dumps(v, sort_keys=True)}\n" for k, v in prov.items())


METRIC_COLUMNS = ("tick", "demand_bps", "delivered_bps", "microwave_power_w", "du_power_w",
                  "energy_efficiency_bps_per_w", "satisfied", "grace")


def metrics_csv(report: RunReport) -> str:
    """Per-tick metrics with a provenance header; one column per node's
    power after the fixed columns."""
    out = io.StringIO()
    out.write(header_lines(report.provenance))
    cols = list(METRIC_COLUMNS) + [f"power_{n}_w" for n in report.node_ids]
    out.write(",".join(cols) + "\n")
    mw = report.node_power.sum(axis=1)
    du = np.zeros(report.horizon) if report.du_power is None else np.nan_to_num(report.du_power).sum(axis=1)
    ee = report.energy_efficiency()
    sat, grace = report.satisfied, report.grace
    for t in range(report.horizon):
        parts = [str(t), repr(float(report.demand[t])), repr(float(report.delivered[t])),
                 repr(float(mw[t])), repr(float(du[t])), repr(float(ee[t])),
                 str(int(sat[t])), str(int(grace[t]))]
        parts += [repr(float(x)) for x in report.node_power[t]]
        out.write(",".join(parts) + "\n")
    return out.getvalue()


def summary(report: RunReport) -> Dict[str, object]:
    return {
        "provenance": report.provenance,
        "policy": report.policy,
        "horizon": report.horizon,
        "dt": report.dt,
        "energy_per_node_j": dict(zip(report.node_ids, map(float, report.energy_per_node))),
        "microwave_energy_j": report.microwave_energy,
        "du_energy_j": report.du_energy,
        "total_energy_j": report.total_energy,
        "monitoring_energy_j": float(report.monitoring_energy.sum()),
        "moisture_energy_j": float(report.moisture_energy.sum()),
        "satisfaction": satisfaction(report, True),
        "satisfaction_raw": satisfaction(report, False),
        "mean_energy_efficiency_bit_per_j": report.mean_energy_efficiency,
        "transitions": len(report.transitions),
        "infeasible_ticks": int(report.infeasible.sum()),
        "iab_violations": len(report.iab_violations),
        "iab_unserved_terminal_ticks": report.iab_unserved,
        "annotations": list(report.annotations),
    }


def summary_json(report: RunReport) -> str:
    return json.dumps(summary(report), indent=2, sort_keys=True) + "\n"


def transitions_jsonl(report: RunReport) -> str:
    lines = [json.dumps({"provenance": report.provenance}, sort_keys=True)]
    lines += [f.to_json() for f in report.transitions]
    return "\n".join(lines) + "\n"


def comparison_csv(rows: Sequence[ComparisonRow], prov: Dict[str, object]) -> str:
    out = io.StringIO()
    out.write(header_lines(prov))
    out.write("policy,energy_j,saving_vs_baseline1_j,energy_efficiency_bit_per_j,satisfaction,satisfaction_raw\n")
    for r in rows:
        out.write(f"{r.policy},{r.energy!r},{r.saving!r},{r.energy_efficiency!r},"
                  f"{r.satisfaction!r},{r.satisfaction_raw!r}\n")
    return out.getvalue()
