"""
IAB-DU access allocation: band selection, RB/MCS/power assignment under
the DU's RB budget and power cap, utilization and load tracking, the
periodic RB-budget update, and block-coordinate (DMCP) iteration with an
answer table.

Power model: each terminal v served with MCS i on ``rb`` resource blocks
transmits p_rb(i) per RB, the power that lifts its per-RB SNR exactly to
the MCS threshold, so p^v = rb * p_rb(i) and p^n = sum_v p^v.
"""

import heapq
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from mwiab.domain import (AccessBand, BandAvailability, BandState, CarrierParams, DuConfig,
                          Terminal, TerminalKind)
from mwiab.phy import (NoFeasibleMcs, channel_gain, max_du_rate, mcs_rate, rb_bandwidth,
                       select_mcs, thermal_noise, update_tx_power)
from mwiab.tables import (MCS_TABLE, MID_TABLE_INDEX, NUMEROLOGY_TABLE, McsEntry, NumerologyEntry,
                          NumerologyTable)

MMWAVE = "mmwave"
MIDBAND = "midband"
BANDS = (MMWAVE, MIDBAND)
EWMA_ALPHA = 0.1
TOL_DMCP = 1e-6
MAX_DMCP_ITERS = 100


class LoadUndefined(ZeroDivisionError):
    pass


# --------------------------------------------------------------------------
# Band selection, utilization and load

def select_band(availability: BandAvailability) -> Tuple[int, int]:
    """(y_mm, y_md): mmWave whenever both bands are up, else mid-band."""
    if availability.current_state is BandState.BOTH_AVAILABLE:
        return 1, 0
    return 0, 1


def rb_utilization(used_rbs: float, budget: float) -> float:
    """Gamma = allocated RBs / RB budget."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    return min(max(used_rbs / budget, 0.0), 1.0)


def traffic_load(y_mm: float, y_md: float, iota_mm: float, iota_md: float,
                 g_mm: float, g_md: float) -> float:
    """rho = (y_md iota_md + y_mm iota_mm) / (y_md g_md + y_mm g_mm)."""
    den = y_md * g_md + y_mm * g_mm
    if den <= 0:
        raise LoadUndefined("total service rate is zero")
    return (y_md * iota_md + y_mm * iota_mm) / den


def update_rb_budget(gamma_bar: float, rho_bar: float, beta: int) -> int:
    """beta_t1 = floor((Gamma_bar + rho_bar) / 2 * beta)."""
    return int(math.floor((gamma_bar + rho_bar) / 2.0 * beta))


def initial_entry(frequency_range: str, table: NumerologyTable = NUMEROLOGY_TABLE) -> NumerologyEntry:
    """Minimum numerology at its maximum bandwidth."""
    entries = table.for_range(frequency_range)
    mu = min(e.mu for e in entries)
    return max((e for e in entries if e.mu == mu), key=lambda e: e.bandwidth_hz)


def reselect_entry(current: NumerologyEntry, new_budget: int, used_bandwidth_hz: float = 0.0,
                   table: NumerologyTable = NUMEROLOGY_TABLE) -> NumerologyEntry:
    """Pick the (numerology, bandwidth) entry after a budget update.

    The new budget is converted to occupied bandwidth at the current
    numerology.  Growing picks the smallest entry covering it; shrinking
    picks the largest entry within it that still holds the bandwidth in
    use; an unchanged budget keeps the entry.  Never below the smallest entry."""
    if new_budget == current.n_rb:
        return current
    entries = sorted(table.for_range(current.frequency_range),
                     key=lambda e: (e.occupied_bandwidth, e.mu))
    target = new_budget * rb_bandwidth(current.mu)
    if new_budget > current.n_rb:
        up = [e for e in entries if e.occupied_bandwidth >= target]
        return up[0] if up else entries[-1]
    down = [e for e in entries if used_bandwidth_hz <= e.occupied_bandwidth <= target]
    if down:
        return down[-1]
    hold = [e for e in entries if e.occupied_bandwidth >= used_bandwidth_hz]
    return hold[0] if hold else entries[-1]


# --------------------------------------------------------------------------
# Allocation

@dataclass
class TerminalAllocation:
    terminal_id: str
    demand: float          # bit/s
    rb_count: int
    mcs_index: int
    rb_power: float        # W per RB
    power: float           # W
    rate: float            # bit/s delivered by the MCS on the RBs
    shannon_rate: float    # bit/s at the resulting SNR

    @property
    def served(self) -> bool:
        return self.rate >= self.demand


@dataclass
class AllocationDecision:
    du_id: str
    band: str
    mu: int
    bandwidth_hz: float
    budget: int
    allocations: Dict[str, TerminalAllocation] = field(default_factory=dict)
    unserved: List[str] = field(default_factory=list)
    unserved_demand: float = 0.0
    d_max: float = 0.0     # bit/s
    warning: Optional[str] = None

    @property
    def y_mm(self) -> int:
        return int(self.band == MMWAVE)

    @property
    def y_md(self) -> int:
        return int(self.band == MIDBAND)

    @property
    def rbs_used(self) -> int:
        return sum(a.rb_count for a in self.allocations.values())

    @property
    def total_power(self) -> float:
        return float(sum(a.power for a in self.allocations.values()))

    @property
    def total_rate(self) -> float:
        return float(sum(a.rate for a in self.allocations.values()))

    @property
    def utilization(self) -> float:
        return rb_utilization(self.rbs_used, self.budget)

    @property
    def objective(self) -> Tuple[float, float]:
        """Lexicographic (unserved demand, power)."""
        return (self.unserved_demand, self.total_power)

    def violations(self, power_cap: float) -> List[str]:
        out = []
        if self.rbs_used > self.budget:
            out.append("rb_budget")
        if self.total_power > power_cap * (1 + 1e-12):
            out.append("power_cap")
        if self.total_rate > self.d_max * (1 + 1e-12):
            out.append("du_rate")
        for a in self.allocations.values():
            if a.shannon_rate < a.demand * (1 - 1e-12) or not a.served:
                out.append(f"shannon:{a.terminal_id}")
        return out

    def log_lines(self, tick: int) -> List[str]:
        return [f"{tick},{self.du_id},{a.terminal_id},{self.band},{a.rb_count},{a.mcs_index},{a.power!r}"
                for a in self.allocations.values()]


class IabDu:
    """One IAB-DU with its terminals and per-band channel state."""

    def __init__(self, config: DuConfig, terminals: Sequence[Terminal],
                 carriers: Mapping[str, AccessBand], adaptive: bool = True,
                 mcs_table: Sequence[McsEntry] = MCS_TABLE,
                 table: NumerologyTable = NUMEROLOGY_TABLE, ewma: float = EWMA_ALPHA):
        self.config = config
        self.id = config.id
        self.power_cap = config.power_cap
        self.terminals = sorted(terminals, key=lambda t: t.id)
        self.carriers = dict(carriers)
        self.adaptive = adaptive
        self.mcs_table = list(mcs_table)
        self.table = table
        if adaptive:
            self.entries = {b: initial_entry(c.frequency_range, table) for b, c in self.carriers.items()}
        else:
            self.entries = {b: table.entry(c.fixed_numerology, c.fixed_bandwidth_hz)
                            for b, c in self.carriers.items()}
        self.gains = {
            b: np.array([channel_gain(t.distance_m, c.carrier_ghz * 1e9,
                                      (config.antenna_gain_dbi, t.antenna_gain_dbi))
                         for t in self.terminals])
            for b, c in self.carriers.items()}
        self.noise_figures = np.array([t.noise_figure_db for t in self.terminals])
        self.tracker = UtilizationTracker(ewma)
        self._cache: Dict[tuple, np.ndarray] = {}

    @property
    def terminal_ids(self) -> List[str]:
        return [t.id for t in self.terminals]

    def params(self, band: str) -> CarrierParams:
        return replace(self.carriers[band].params, numerology=self.entries[band].mu)

    def budget(self, band: str) -> int:
        return self.entries[band].n_rb

    def noise_per_rb(self, band: str) -> np.ndarray:
        key = ("noise", self.entries[band].mu)
        if key not in self._cache:
            bw = rb_bandwidth(self.entries[band].mu)
            self._cache[key] = np.array([thermal_noise(bw, nf) for nf in self.noise_figures])
        return self._cache[key]

    def per_rb_rates(self, band: str, table: Sequence[McsEntry]) -> np.ndarray:
        """bit/s carried by one RB at each MCS of ``table``."""
        key = ("rate", band, self.entries[band].mu, tuple(e.index for e in table))
        if key not in self._cache:
            params = self.params(band)
            self._cache[key] = np.array([mcs_rate(params, e, 1) for e in table])
        return self._cache[key]

    def mid_table_capacity(self, band: str) -> float:
        return mcs_rate(self.params(band), self.mcs_table[MID_TABLE_INDEX], self.budget(band))

    def band_state(self, rng: np.random.Generator) -> BandState:
        """Sample every terminal's availability; mmWave is usable only if all
        terminals currently see both bands."""
        phis = np.array([t.band_availability.phi for t in self.terminals])
        both = rng.random(len(phis)) < phis
        return BandState.BOTH_AVAILABLE if bool(np.all(both)) else BandState.MID_ONLY


def _rb_matrix(demands: np.ndarray, per_rb: np.ndarray) -> np.ndarray:
    """RBs needed per (terminal, MCS): tight ceiling of demand / per-RB rate."""
    x = demands[:, None] / per_rb[None, :]
    n = np.ceil(x)
    n = np.where((n > 1) & ((n - 1) * per_rb[None, :] >= demands[:, None]), n - 1, n)
    n = np.where(n * per_rb[None, :] < demands[:, None], n + 1, n)
    return n.astype(np.int64)


def allocate(du: IabDu, demands: Mapping[str, float], band: Optional[str] = None,
             fixed_mcs: Optional[int] = None, mcs_table: Optional[Sequence[McsEntry]] = None,
             budget: Optional[int] = None) -> AllocationDecision:
    """Assign RBs, MCS and per-RB power to every terminal with demand.

    Adaptive mode takes each terminal's minimum-power (MCS, RB) pair and,
    while the RB budget is exceeded, moves the terminal whose next
    higher-MCS option costs the least extra power per RB saved.  If even
    the most RB-efficient MCS overflows the budget, terminals are served
    in ascending order of that minimum RB count (ties by id) and the rest
    are reported unserved.  ``fixed_mcs`` pins every terminal to one MCS."""
    band = band or MMWAVE
    table = list(mcs_table) if mcs_table is not None else du.mcs_table
    params = du.params(band)
    entry = du.entries[band]
    beta = entry.n_rb if budget is None else budget
    ids = du.terminal_ids
    d = np.array([max(float(demands.get(t, 0.0)), 0.0) for t in ids])
    dec = AllocationDecision(du.id, band, entry.mu, entry.bandwidth_hz, beta,
                             d_max=1e6 * max_du_rate(params, beta))
    active = np.flatnonzero(d > 0)
    if active.size == 0:
        return dec
    per_rb = du.per_rb_rates(band, table)
    thr = np.array([e.snr_threshold for e in table])
    noise = du.noise_per_rb(band)
    gain = du.gains[band]
    rb = _rb_matrix(d[active], per_rb)
    prb = thr[None, :] * (noise[active] / gain[active])[:, None]
    power = rb * prb
    if fixed_mcs is not None:
        choice = np.full(active.size, fixed_mcs)
        allowed = np.zeros_like(rb, dtype=bool)
        allowed[:, fixed_mcs] = True
    else:
        allowed = np.ones_like(rb, dtype=bool)

    served = _fit_budget(rb, power, allowed, beta)
    if fixed_mcs is None:
        choice = _min_power_plan(rb, power, served, beta)
    cap_ok = _enforce_power_cap(power, choice, served, du.power_cap)
    unserved_idx = [i for i in range(active.size) if not (served[i] and cap_ok[i])]

    mu = entry.mu
    layers = params.layers * params.num_carriers
    for i, v in enumerate(active):
        tid = ids[v]
        if i in unserved_idx:
            dec.unserved.append(tid)
            dec.unserved_demand += float(d[v])
            continue
        j = int(choice[i])
        n = int(rb[i, j])
        delta = float(thr[j])
        dec.allocations[tid] = TerminalAllocation(
            tid, float(d[v]), n, table[j].index, float(prb[i, j]), float(power[i, j]),
            float(per_rb[j] * n), layers * rb_bandwidth(mu, n) * math.log2(1 + delta))
    if dec.unserved:
        dec.warning = f"{len(dec.unserved)} terminal(s) unserved"
    return dec


def _fit_budget(rb: np.ndarray, power: np.ndarray, allowed: np.ndarray, beta: int) -> np.ndarray:
    """Which terminals can be served: all if their leanest options fit, else
    cheapest-first by leanest RB count."""
    lean = np.where(allowed, rb, np.iinfo(np.int64).max).min(axis=1)
    served = np.ones(len(rb), dtype=bool)
    if lean.sum() <= beta:
        return served
    order = np.lexsort((np.arange(len(rb)), lean))
    used = 0
    for i in order:
        if used + lean[i] <= beta:
            used += lean[i]
        else:
            served[i] = False
    return served


def _min_power_plan(rb: np.ndarray, power: np.ndarray, served: np.ndarray, beta: int) -> np.ndarray:
    """Start from each terminal's minimum-power option; while over budget,
    apply the move with the least extra power per RB saved."""
    n = len(rb)
    choice = np.array([np.lexsort((rb[i], power[i]))[0] for i in range(n)], dtype=int)
    used = int(sum(rb[i, choice[i]] for i in range(n) if served[i]))

    def best_move(i):
        c = choice[i]
        saved = rb[i, c] - rb[i]
        ok = saved > 0
        if not ok.any():
            return None
        ratio = np.where(ok, (power[i] - power[i, c]) / np.where(ok, saved, 1), np.inf)
        j = int(np.argmin(ratio))
        return (float(ratio[j]), i, j)

    heap = [m for m in (best_move(i) for i in range(n) if served[i]) if m is not None]
    heapq.heapify(heap)
    while used > beta and heap:
        _, i, j = heapq.heappop(heap)
        used -= int(rb[i, choice[i]] - rb[i, j])
        choice[i] = j
        m = best_move(i)
        if m is not None:
            heapq.heappush(heap, m)
    return choice


def _enforce_power_cap(power: np.ndarray, choice: np.ndarray, served: np.ndarray,
                       cap: float) -> np.ndarray:
    ok = served.copy()
    p = np.array([power[i, choice[i]] if ok[i] else 0.0 for i in range(len(choice))])
    while p.sum() > cap:
        worst = int(np.argmax(p))
        ok[worst] = False
        p[worst] = 0.0
    return ok


# --------------------------------------------------------------------------
# Three-case MCS / power adaptation

def adapt_mcs_power(table: Sequence[McsEntry], index: int, p_rb: float, gain_sq: float,
                    noise: float, demand: float, rb_count: int, params: CarrierParams,
                    p_max: Optional[float] = None) -> Tuple[int, float, str]:
    """One adaptation step for a terminal at MCS position ``index`` (position
    in ``table``).  Returns (new index, new per-RB power, case label).

    - SNR above threshold and demand met: lower power to the threshold.
    - SNR below threshold and demand unmet: raise the MCS to the lowest one
      meeting the demand (reachable at ``p_max``) and raise power to it.
    - SNR at threshold: no change."""
    delta = gain_sq * p_rb / noise
    thr = table[index].snr_threshold
    rate = mcs_rate(params, table[index], rb_count)
    if math.isclose(delta, thr, rel_tol=1e-12):
        return index, p_rb, "hold"
    if delta > thr and rate >= demand:
        return index, update_tx_power(p_rb, delta, thr, cap=p_max), "decrease"
    if delta < thr and rate < demand:
        reach = gain_sq * (p_max if p_max is not None else math.inf) / noise
        try:
            e, _ = select_mcs(table, reach, demand, rb_count, params)
            new = max(table.index(e), index + 1) if table.index(e) > index else index
        except NoFeasibleMcs:
            new = index
        new = min(new, len(table) - 1)
        return new, update_tx_power(p_rb, delta, table[new].snr_threshold, cap=p_max), "increase"
    if delta < thr:
        return index, update_tx_power(p_rb, delta, thr, cap=p_max), "restore"
    e, _ = select_mcs(table, delta, demand, rb_count, params)
    new = max(table.index(e), index)
    return new, update_tx_power(p_rb, delta, table[new].snr_threshold, cap=p_max), "upgrade"


# --------------------------------------------------------------------------
# Utilization tracking and budget updates

class UtilizationTracker:
    """EWMA arrival rates and per-period (Gamma, rho) samples per band.  The
    service rate g of a band is its RB budget's capacity at the mid-table MCS."""

    def __init__(self, alpha: float = EWMA_ALPHA):
        self.alpha = alpha
        self.arrival = {b: None for b in BANDS}
        self.service = {b: 0.0 for b in BANDS}
        self.samples: Dict[str, List[Tuple[float, float]]] = {b: [] for b in BANDS}

    def record(self, band: str, gamma: float, offered_bps: float, service_bps: float) -> float:
        prev = self.arrival[band]
        self.arrival[band] = offered_bps if prev is None else (
            self.alpha * offered_bps + (1 - self.alpha) * prev)
        self.service[band] = service_bps
        y_mm, y_md = (1, 0) if band == MMWAVE else (0, 1)
        rho = traffic_load(y_mm, y_md, self.arrival[MMWAVE] or 0.0, self.arrival[MIDBAND] or 0.0,
                           self.service[MMWAVE], self.service[MIDBAND])
        self.samples[band].append((gamma, rho))
        return rho

    def averages(self, band: str) -> Optional[Tuple[float, float]]:
        s = self.samples[band]
        if not s:
            return None
        a = np.array(s)
        return float(a[:, 0].mean()), float(a[:, 1].mean())

    def reset(self):
        for b in BANDS:
            self.samples[b] = []


def period_update(du: IabDu, used_bandwidth: Optional[Mapping[str, float]] = None) -> Dict[str, NumerologyEntry]:
    """End of a budget period: update each band that saw traffic."""
    used_bandwidth = used_bandwidth or {}
    for band in BANDS:
        avg = du.tracker.averages(band)
        if avg is None:
            continue
        cur = du.entries[band]
        new_beta = update_rb_budget(avg[0], avg[1], cur.n_rb)
        du.entries[band] = reselect_entry(cur, new_beta, used_bandwidth.get(band, 0.0), du.table)
    du.tracker.reset()
    return dict(du.entries)


# --------------------------------------------------------------------------
# DMCP block-coordinate iteration

@dataclass
class AnswerRecord:
    iteration: int
    band: str
    mu: int
    bandwidth_hz: float
    mcs: Dict[str, int]
    rbs: Dict[str, int]
    objective: Tuple[float, float]  # (unserved bit/s, energy J)


@dataclass
class AnswerTable:
    records: List[AnswerRecord] = field(default_factory=list)

    def initialize(self, du: IabDu, band: str):
        """Iteration 0: current (minimum-numerology) entries and the lowest
        MCS for every terminal; objective left open."""
        e = du.entries[band]
        self.records = [AnswerRecord(0, band, e.mu, e.bandwidth_hz,
                                     {t: 0 for t in du.terminal_ids}, {}, (math.inf, math.inf))]

    def accept(self, rec: AnswerRecord) -> bool:
        if self.records and rec.objective > self.records[-1].objective:
            return False
        self.records.append(rec)
        return True

    @property
    def objectives(self) -> List[Tuple[float, float]]:
        return [r.objective for r in self.records]

    def nonincreasing(self) -> bool:
        obj = self.objectives
        return all(b <= a for a, b in zip(obj, obj[1:]))


def _relaxed_band(plans: Mapping[str, AllocationDecision], mm_available: bool) -> float:
    """Block 1: minimize y c_mm + (1 - y) c_md over y in [0, ub] with the
    lexicographic (unserved, power) costs.  A strict preference gives a
    vertex; a tie leaves every y optimal and 0.5 is returned."""
    if not mm_available:
        return 0.0
    c_mm, c_md = plans[MMWAVE].objective, plans[MIDBAND].objective
    if c_mm < c_md:
        return 1.0
    if c_mm > c_md:
        return 0.0
    return 0.5


def _round_band(y: float, plans: Mapping[str, AllocationDecision], mm_available: bool) -> str:
    if y > 0.5:
        return MMWAVE
    if y == 0.5 and mm_available and not plans[MMWAVE].unserved:
        return MMWAVE
    return MIDBAND


def dmcp_iterate(du: IabDu, demands: Mapping[str, float], answer_table: AnswerTable,
                 band_state: BandState = BandState.BOTH_AVAILABLE, dt: float = 1.0,
                 tol: float = TOL_DMCP, max_iters: int = MAX_DMCP_ITERS) -> AllocationDecision:
    """Alternate band choice (block 1) and numerology/RB/MCS assignment
    (block 2) until the energy objective changes by less than ``tol``."""
    mm_ok = band_state is BandState.BOTH_AVAILABLE
    band = MMWAVE if mm_ok else MIDBAND
    if not answer_table.records:
        answer_table.initialize(du, band)
    best: Optional[AllocationDecision] = None
    prev_obj = None
    converged = False
    plans: Dict[str, AllocationDecision] = {}
    for it in range(1, max_iters + 1):
        # block 2: (z, w, kappa) for each band with y fixed per band
        for b in (BANDS if mm_ok else (MIDBAND,)):
            if b not in plans:
                plans[b] = allocate(du, demands, band=b)
        # block 1: relaxed y, rounded toward mmWave when its plan fits
        band = _round_band(_relaxed_band(plans, mm_ok), plans, mm_ok)
        plan = plans[band]
        obj = (plan.unserved_demand, plan.total_power * dt)
        rec = AnswerRecord(it, band, plan.mu, plan.bandwidth_hz,
                           {a.terminal_id: a.mcs_index for a in plan.allocations.values()},
                           {a.terminal_id: a.rb_count for a in plan.allocations.values()}, obj)
        if answer_table.accept(rec):
            best = plan
        if prev_obj is not None and abs(obj[1] - prev_obj[1]) <= tol * max(1.0, abs(prev_obj[1])) \
                and obj[0] == prev_obj[0]:
            converged = True
            break
        prev_obj = obj
    if best is None:
        best = plans[band]
    if not converged:
        best.warning = (best.warning + "; " if best.warning else "") + "DMCP did not converge"
    elif best.unserved:
        best.warning = (best.warning + "; " if best.warning else "") + "infeasible demand: best effort"
    return best


# --------------------------------------------------------------------------
# Demand hierarchy

def subtree_demands(terminals: Sequence[Terminal], cpe_demand: Mapping[str, float]) -> Dict[str, float]:
    """Demand of every terminal: CPEs from the trace, IAB-MTs the total of
    all CPEs below their child DU."""
    by_du: Dict[str, List[Terminal]] = {}
    for t in terminals:
        by_du.setdefault(t.parent_du_id, []).append(t)
    memo: Dict[str, float] = {}

    def du_total(du_id: str) -> float:
        if du_id in memo:
            return memo[du_id]
        tot = 0.0
        for t in by_du.get(du_id, []):
            tot += cpe_demand.get(t.id, 0.0) if t.kind is TerminalKind.CPE else du_total(t.child_du_id)
        memo[du_id] = tot
        return tot

    out = {}
    for t in terminals:
        out[t.id] = cpe_demand.get(t.id, 0.0) if t.kind is TerminalKind.CPE else du_total(t.child_du_id)
    return out
