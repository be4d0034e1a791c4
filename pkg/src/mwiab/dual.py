"""
Microwave energy minimization by Lagrangian relaxation.

For one node the steady-state decision is which radios serve (the rest
deep-sleep).  The relaxed constraints are

    g1 = sum_serving P_tx - sum_all P_tx_cap         [W]
    g2 = (D - sum_serving capacity) / 1e9             [Gbit/s]
    g3 = 1 - #radios in {Startup, WakeUp, Serving}    [-]

and L = A + Lam*g1 + lam*g2 + mu*g3.  The dual function is maximized by
projected subgradient ascent with a Polyak step; primal solutions are
recovered from the feasible L-minimizers seen along the way.
"""

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from mwiab.domain import RadioState
from mwiab.fsm import ActionKind, TransitionMatrix, TRANSITIONS

SV = RadioState.SERVING
DS = RadioState.DEEP_SLEEP

GBIT = 1e9
M_ENUM = 4
TOL_KKT = 1e-6
MAX_STALL = 50
HALVE_AFTER = 5  # non-improving steps before the target level is halved


class NegativeMultiplier(ValueError):
    pass


class ZeroEnergy(ZeroDivisionError):
    pass


class EmptyTrace(ValueError):
    pass


class TickRangeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class LagrangeMultipliers:
    power: float = 0.0   # Lambda, per W
    rate: float = 0.0    # lambda, W per Gbit/s
    floor: float = 0.0   # mu, W

    def __post_init__(self):
        if min(self.power, self.rate, self.floor) < 0:
            raise NegativeMultiplier(f"multipliers must be nonnegative: {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.power, self.rate, self.floor])

    @classmethod
    def from_array(cls, a) -> "LagrangeMultipliers":
        a = np.maximum(np.asarray(a, dtype=float), 0.0)
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class MonitoringCost:
    """Energy spent exchanging the transition matrix and power vector:
    E = S * xi joules per tick."""
    xi: float = 5e-8
    size_bits: float = 0.0

    def __post_init__(self):
        if self.xi < 0 or self.size_bits < 0:
            raise ValueError("monitoring cost parameters must be nonnegative")

    @property
    def energy(self) -> float:
        return self.size_bits * self.xi

    @classmethod
    def for_node(cls, n_radios: int, xi: float = 5e-8, n_states: int = len(RadioState),
                 bits_per_value: int = 64) -> "MonitoringCost":
        return cls(xi, bits_per_value * (n_states * n_radios + n_radios))


@dataclass(frozen=True)
class RadioSpec:
    capacity: float        # bit/s while serving
    serving_power: float   # W
    sleep_power: float     # W
    tx_power: float = 0.0
    tx_cap: float = 1.0


@dataclass(frozen=True)
class NodeInstance:
    radios: Tuple[RadioSpec, ...]
    demand: float
    monitoring: MonitoringCost = MonitoringCost(0.0, 0.0)
    dt: float = 1.0

    @property
    def M(self) -> int:
        return len(self.radios)

    def cost(self, serving: Sequence[bool]) -> float:
        """Steady-state surrogate objective (W) of a serving pattern."""
        p = sum(r.serving_power if s else r.sleep_power for r, s in zip(self.radios, serving))
        return p + self.monitoring.energy / self.dt

    def capacity(self, serving: Sequence[bool]) -> float:
        return sum(r.capacity for r, s in zip(self.radios, serving) if s)

    def residuals(self, serving: Sequence[bool]) -> np.ndarray:
        g1 = sum(r.tx_power for r, s in zip(self.radios, serving) if s) - sum(r.tx_cap for r in self.radios)
        g2 = (self.demand - self.capacity(serving)) / GBIT
        g3 = 1.0 - sum(bool(s) for s in serving)
        return np.array([g1, g2, g3])

    def feasible(self, serving: Sequence[bool], tol: float = 0.0) -> bool:
        return bool(np.all(self.residuals(serving) <= tol))


def states_to_serving(states: Sequence[RadioState]) -> Tuple[bool, ...]:
    return tuple(s == SV for s in states)


def serving_to_states(serving: Sequence[bool]) -> List[RadioState]:
    return [SV if s else DS for s in serving]


def lagrangian(states: Sequence[RadioState], mult: LagrangeMultipliers, inst: NodeInstance,
               objective: Optional[float] = None) -> float:
    """L = A + Lam*g1 + lam*g2 + mu*g3 for a radio state assignment.

    ``objective`` overrides A (e.g. a trace-averaged surrogate value)."""
    if not isinstance(mult, LagrangeMultipliers):
        raise TypeError("mult must be LagrangeMultipliers")
    serving = states_to_serving(states)
    on = sum(1 for s in states if s.is_on)
    a = inst.cost(serving) if objective is None else objective
    g = inst.residuals(serving)
    g[2] = 1.0 - on
    return float(a + mult.as_array() @ g)


# --------------------------------------------------------------------------
# Surrogate objective over a trace

def surrogate_objective(trace: Sequence[Sequence[Tuple[RadioState, Optional[ActionKind]]]],
                        profiles: Sequence[Dict[RadioState, float]],
                        monitoring: MonitoringCost = MonitoringCost(0.0, 0.0),
                        matrix: TransitionMatrix = TransitionMatrix(), dt: float = 1.0) -> float:
    """Time-average (W) of the per-tick monitoring energy plus the state power
    of each radio, weighting successor states by the transition-matrix row of
    the (state, action) taken.  ``trace[t][m]`` is radio m's pre-action state
    and action at tick t (action ``None`` holds the state)."""
    if len(trace) == 0:
        raise EmptyTrace("surrogate objective needs at least one tick")
    total = 0.0
    for tick in trace:
        total += monitoring.energy + dt * sum(
            matrix.expected_power(s, a, prof) for (s, a), prof in zip(tick, profiles))
    return total / (len(trace) * dt)


def policy_actions(states: Sequence[RadioState], serving: Sequence[bool]) -> List[Optional[ActionKind]]:
    """One legal step toward a target serving pattern, never taking the
    last ON radio down."""
    out: List[Optional[ActionKind]] = []
    on = sum(1 for s in states if s.is_on)
    for s, want in zip(states, serving):
        a = None
        if want and s == DS:
            a = ActionKind.GO_WAKE_UP
        elif want and s == RadioState.COMPLETELY_OFF:
            a = ActionKind.GO_STARTUP
        elif not want and s == SV and on > 1:
            a = ActionKind.GO_DEEP_SLEEP
            on -= 1
        elif s == RadioState.STARTUP:
            a = ActionKind.STARTUP_COMPLETE
        elif s == RadioState.WAKE_UP:
            a = ActionKind.WAKE_UP_COMPLETE
        out.append(a)
    return out


def evaluate_policy(policy: Callable[[Sequence[RadioState], float], Sequence[Optional[ActionKind]]],
                    demands: Sequence[float], initial: Sequence[RadioState]
                    ) -> List[List[Tuple[RadioState, Optional[ActionKind]]]]:
    """Roll a deterministic policy over a demand trace; transient states
    complete in one step.  Returns the (state, action) trace."""
    states = list(initial)
    trace = []
    for d in demands:
        acts = policy(states, d)
        trace.append(list(zip(states, acts)))
        states = [s if a is None else TRANSITIONS[(s, a)] for s, a in zip(states, acts)]
    return trace


# --------------------------------------------------------------------------
# KKT report

@dataclass
class KktReport:
    stationarity: bool
    complementary_slackness: bool
    primal_feasibility: bool
    dual_feasibility: bool
    residuals: Dict[str, float]
    note: str = ("stationarity is 1-flip local optimality of L over primal-feasible "
                 "neighbours (discrete policy space)")

    @property
    def all_pass(self) -> bool:
        return (self.stationarity and self.complementary_slackness
                and self.primal_feasibility and self.dual_feasibility)

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values())


def check_kkt(states: Sequence[RadioState], mult: LagrangeMultipliers, inst: NodeInstance,
              tol: float = TOL_KKT) -> KktReport:
    serving = states_to_serving(states)
    a = inst.cost(serving)
    scale = max(1.0, abs(a))
    g = inst.residuals(serving)
    g[2] = 1.0 - sum(1 for s in states if s.is_on)
    lam = np.array([mult.power, mult.rate, mult.floor])
    primal = np.maximum(g, 0.0) / scale
    slack = np.abs(lam * g) / scale
    dual_res = float(np.max(np.maximum(-lam, 0.0))) / scale
    base = lagrangian(states, mult, inst)
    drop = 0.0
    for m in range(inst.M):
        flipped = list(serving)
        flipped[m] = not flipped[m]
        if not inst.feasible(flipped):
            continue
        drop = max(drop, base - lagrangian(serving_to_states(flipped), mult, inst))
    stat = drop / scale
    res = {"primal_power": float(primal[0]), "primal_rate": float(primal[1]), "primal_floor": float(primal[2]),
           "slack_power": float(slack[0]), "slack_rate": float(slack[1]), "slack_floor": float(slack[2]),
           "dual": dual_res, "stationarity": stat}
    return KktReport(stat <= tol, bool(np.all(slack <= tol)), bool(np.all(primal <= tol)),
                     dual_res <= tol, res)


# --------------------------------------------------------------------------
# Dual ascent

@dataclass
class DualIterate:
    k: int
    multipliers: LagrangeMultipliers
    dual_value: float
    primal_value: float


@dataclass
class DualResult:
    multipliers: LagrangeMultipliers
    serving: Tuple[bool, ...]
    primal_value: float
    dual_value: float
    converged: bool
    iterations: int
    history: List[DualIterate] = field(default_factory=list)
    warning: Optional[str] = None
    kkt: Optional[KktReport] = None

    @property
    def gap(self) -> float:
        return self.primal_value - self.dual_value

    @property
    def serving_set(self) -> FrozenSet[int]:
        return frozenset(i for i, s in enumerate(self.serving) if s)

    def to_dict(self) -> dict:
        return {
            "multipliers": {"power": self.multipliers.power, "rate": self.multipliers.rate,
                            "floor": self.multipliers.floor},
            "serving": [int(s) for s in self.serving],
            "primal_value": self.primal_value, "dual_value": self.dual_value,
            "gap": self.gap, "converged": self.converged, "iterations": self.iterations,
            "complexity_bound": complexity_bound(len(self.serving)),
            "warning": self.warning,
            "kkt": None if self.kkt is None else {
                "stationarity": self.kkt.stationarity,
                "complementary_slackness": self.kkt.complementary_slackness,
                "primal_feasibility": self.kkt.primal_feasibility,
                "dual_feasibility": self.kkt.dual_feasibility,
                "residuals": self.kkt.residuals},
            "history": [{"k": h.k, "power": h.multipliers.power, "rate": h.multipliers.rate,
                         "floor": h.multipliers.floor, "g": h.dual_value, "A": h.primal_value}
                        for h in self.history],
        }


def complexity_bound(r: int) -> int:
    """Iteration-count scale 2 r^3 + r^2 of the decomposition."""
    return 2 * r ** 3 + r ** 2


def _order_key(inst: NodeInstance, serving: Tuple[bool, ...]):
    # lower cost first, then larger capacity, then lexicographic pattern
    return (round(inst.cost(serving), 9), -inst.capacity(serving), tuple(not s for s in serving))


def dual_function(inst: NodeInstance, mult: LagrangeMultipliers) -> Tuple[float, Tuple[bool, ...]]:
    """g = min over all serving patterns of L.  L is separable per radio,
    so the minimizer includes radio m exactly when its coefficient is negative."""
    Lam, lam, mu = mult.power, mult.rate, mult.floor
    serving = []
    val = inst.monitoring.energy / inst.dt - Lam * sum(r.tx_cap for r in inst.radios) \
        + lam * inst.demand / GBIT + mu
    for r in inst.radios:
        on = r.serving_power + Lam * r.tx_power - lam * r.capacity / GBIT - mu
        off = r.sleep_power
        serving.append(on < off)
        val += min(on, off)
    return val, tuple(serving)


def _greedy_serving(inst: NodeInstance) -> Tuple[bool, ...]:
    order = sorted(range(inst.M), key=lambda m: (-inst.radios[m].capacity, m))
    serving = [False] * inst.M
    cap = 0.0
    for m in order:
        serving[m] = True
        cap += inst.radios[m].capacity
        if cap >= inst.demand:
            break
    return tuple(serving)


def solve_dual(inst: NodeInstance, initial: LagrangeMultipliers = LagrangeMultipliers(),
               alpha0: float = 1.0, max_iter: int = 1000, tol: float = TOL_KKT,
               max_stall: int = MAX_STALL, m_enum: int = M_ENUM) -> DualResult:
    """Projected subgradient ascent on the dual function.

    The step is Polyak's with a target level: (level - g) / |subgradient|^2
    where level = min(best primal, best dual + delta).  delta starts at the
    current primal-dual gap and is halved after every HALVE_AFTER steps
    that fail to improve the dual value, so the method also settles when a
    duality gap keeps the primal value out of reach.  Before any primal
    value exists the step is alpha0 / sqrt(k)."""
    M = inst.M
    if M <= m_enum:
        patterns = list(itertools.product((False, True), repeat=M))
        c = np.array([inst.cost(p) for p in patterns])
        G = np.array([inst.residuals(p) for p in patterns])
        feas = np.all(G <= 0, axis=1)
        rank = {p: i for i, p in enumerate(sorted(patterns, key=lambda p: _order_key(inst, p)))}
        tie = np.array([rank[p] for p in patterns])
    else:
        patterns = None

    mult = initial.as_array()
    best_primal = math.inf
    best_serving: Optional[Tuple[bool, ...]] = None
    best_dual = -math.inf
    best_mult = mult.copy()
    history: List[DualIterate] = []
    stall = 0
    delta = None  # target level above the best dual value
    since_improve = 0
    converged = False
    warning = None
    k = 0
    if patterns is None:
        best_serving = _greedy_serving(inst)
        if inst.feasible(best_serving):
            best_primal = inst.cost(best_serving)

    for k in range(1, max_iter + 1):
        m_obj = LagrangeMultipliers.from_array(mult)
        if patterns is not None:
            L = c + G @ mult
            i_star = int(np.lexsort((tie, L))[0])
            g_val, sub = float(L[i_star]), G[i_star]
            if feas.any():
                fi = np.flatnonzero(feas)
                j = int(fi[np.lexsort((tie[fi], np.round(L[fi], 9)))[0]])
                if c[j] < best_primal - 1e-12 or (
                        abs(c[j] - best_primal) <= 1e-12 and tie[j] < rank[best_serving]):
                    best_primal, best_serving = float(c[j]), patterns[j]
        else:
            g_val, pat = dual_function(inst, m_obj)
            sub = inst.residuals(pat)
        if g_val > best_dual + 1e-12 * max(1.0, abs(g_val)):
            best_dual, best_mult = g_val, mult.copy()
            stall = since_improve = 0
        else:
            stall += 1
            since_improve += 1
            if since_improve >= HALVE_AFTER and delta is not None:
                delta *= 0.5
                since_improve = 0
        history.append(DualIterate(k, m_obj, g_val, best_primal))
        scale = max(1.0, abs(best_primal)) if math.isfinite(best_primal) else 1.0
        if math.isfinite(best_primal) and best_primal - best_dual <= tol * scale:
            converged = True
            break
        if stall >= max_stall:
            warning = f"dual value did not improve for {max_stall} iterations"
            break
        sub = np.where((mult <= 0) & (sub < 0), 0.0, sub)  # active bounds
        norm2 = float(sub @ sub)
        if norm2 == 0:
            break
        if math.isfinite(best_primal):
            if delta is None:
                delta = max(best_primal - best_dual, tol * scale)
            target = min(best_primal, best_dual + delta)
            step = max(target - g_val, 0.0) / norm2
        else:
            step = alpha0 / math.sqrt(k) / math.sqrt(norm2)
        mult = np.maximum(mult + step * sub, 0.0)
    else:
        warning = f"no convergence in {max_iter} iterations"

    if best_serving is None:
        best_serving = _greedy_serving(inst)
        best_primal = inst.cost(best_serving)
        warning = warning or "no feasible serving set"
    mult_star = LagrangeMultipliers.from_array(best_mult)
    res = DualResult(mult_star, tuple(best_serving), float(best_primal), float(best_dual),
                     converged, k, history, warning)
    res.kkt = check_kkt(serving_to_states(best_serving), mult_star, inst)
    if warning:
        warnings.warn(warning, RuntimeWarning, stacklevel=2)
    return res


def brute_force_serving(inst: NodeInstance) -> Optional[Tuple[bool, ...]]:
    """Exhaustive minimum-power feasible serving pattern (same tie rule)."""
    pats = [p for p in itertools.product((False, True), repeat=inst.M) if inst.feasible(p)]
    if not pats:
        return None
    return min(pats, key=lambda p: _order_key(inst, p))


class DualPolicy:
    """Answer table of solved dual problems keyed by demand bucket.  Each
    bucket is solved at its upper edge so the returned serving set covers
    every demand in the bucket."""

    def __init__(self, radios: Sequence[RadioSpec], monitoring: MonitoringCost,
                 bucket_bps: float = 10e6, dt: float = 1.0, **solver_kwargs):
        self.radios = tuple(radios)
        self.monitoring = monitoring
        self.bucket = bucket_bps
        self.dt = dt
        self.solver_kwargs = solver_kwargs
        self.table: Dict[int, DualResult] = {}
        self._sets: Dict[int, FrozenSet[int]] = {}

    def bucket_of(self, demand: float) -> int:
        return max(0, math.ceil(demand / self.bucket))

    def result(self, demand: float) -> DualResult:
        b = self.bucket_of(demand)
        if b not in self.table:
            inst = NodeInstance(self.radios, b * self.bucket, self.monitoring, self.dt)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                self.table[b] = solve_dual(inst, **self.solver_kwargs)
        return self.table[b]

    def target_set(self, demand: float) -> FrozenSet[int]:
        b = self.bucket_of(demand)
        if b not in self._sets:
            self._sets[b] = self.result(demand).serving_set
        return self._sets[b]


@dataclass
class PolicyResult:
    policy: Callable[[Sequence[RadioState], float], List[Optional[ActionKind]]]
    objective: float
    dual_value: float
    kkt: Optional[KktReport]


def policy_from_answer_table(table: DualPolicy) -> Callable:
    def pi(states, demand):
        return policy_actions(states, table.result(demand).serving)
    return pi


# --------------------------------------------------------------------------
# Joint objective and energy efficiency

@dataclass
class JointResult:
    value: float
    microwave_average: float
    iab_average: float
    violations: Dict[int, List[str]]


def joint_objective(microwave_power: Sequence[float], du_power: Sequence[float], dt: float = 1.0,
                    delivered: Optional[Sequence[float]] = None, demand: Optional[Sequence[float]] = None,
                    du_rate: Optional[Sequence[float]] = None, du_max: Optional[Sequence[float]] = None,
                    served_rate: Optional[Sequence[float]] = None,
                    required_rate: Optional[Sequence[float]] = None) -> JointResult:
    """A = (1/T) sum_t [sum_n p^n + microwave state power], with per-tick
    checks of delivered >= D, DU rate <= D_Max and served >= required."""
    mw = np.asarray(microwave_power, dtype=float)
    du = np.asarray(du_power, dtype=float)
    if mw.shape != du.shape:
        raise TickRangeMismatch(f"microwave series has {mw.size} ticks, IAB series {du.size}")
    if mw.size == 0:
        raise EmptyTrace("joint objective needs at least one tick")
    viol: Dict[int, List[str]] = {}

    def flag(mask, name):
        for t in np.flatnonzero(mask):
            viol.setdefault(int(t), []).append(name)

    for a, b, name in ((demand, delivered, "delivery"), (du_rate, du_max, "du_rate"),
                       (required_rate, served_rate, "served_rate")):
        if a is None or b is None:
            continue
        a, b = np.asarray(a, float), np.asarray(b, float)
        if a.shape != mw.shape or b.shape != mw.shape:
            raise TickRangeMismatch(f"constraint series {name} has the wrong length")
        flag(a > b * (1 + 1e-12) + 1e-9, name)
    return JointResult(float(np.mean(mw + du)), float(np.mean(mw)), float(np.mean(du)), viol)


def energy_efficiency(bits: float, joules: float) -> float:
    """Delivered bits per joule."""
    if joules <= 0:
        raise ZeroEnergy("energy must be positive")
    return bits / joules
