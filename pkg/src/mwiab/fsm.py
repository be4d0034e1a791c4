"""
Five-sub-state microwave radio controller.

A radio moves between CompletelyOff, DeepSleep, Startup, WakeUp and Serving
only along the edges in ``TRANSITIONS``.  ``step_controller`` advances
timers, applies the threshold policy and reports the node's power draw;
``sync_states`` makes a downstream node mirror its upstream peer.
"""

import enum
import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from mwiab.domain import MicrowaveNode, RadioState, RadioUnit

CO = RadioState.COMPLETELY_OFF
DS = RadioState.DEEP_SLEEP
SU = RadioState.STARTUP
WU = RadioState.WAKE_UP
SV = RadioState.SERVING


class ActionKind(enum.Enum):
    GO_STARTUP = "a1_m4"
    STAY_OFF = "a~0_m2"
    STARTUP_FAIL = "a~*0_m2"
    STARTUP_COMPLETE = "a1_m6"
    GO_DEEP_SLEEP = "a0_m3"
    STAY_SLEEP = "a~0_m3"
    STAY_SERVING = "a~1_m6"
    GO_WAKE_UP = "a1_m5"
    WAKE_UP_FAIL = "a~*0_m3"
    WAKE_UP_COMPLETE = "a1_m7"
    GO_COMPLETELY_OFF = "a0_m2"
    POWER_ON = "a1_m"
    POWER_OFF = "a0_m"


A = ActionKind

# (state, action) -> next state; the full edge set of the radio diagram.
TRANSITIONS: Dict[Tuple[RadioState, ActionKind], RadioState] = {
    (CO, A.GO_STARTUP): SU,
    (CO, A.STAY_OFF): CO,
    (SU, A.STARTUP_COMPLETE): SV,
    (SU, A.STARTUP_FAIL): CO,
    (SV, A.GO_DEEP_SLEEP): DS,
    (SV, A.STAY_SERVING): SV,
    (DS, A.GO_WAKE_UP): WU,
    (DS, A.STAY_SLEEP): DS,
    (DS, A.GO_COMPLETELY_OFF): CO,
    (WU, A.WAKE_UP_COMPLETE): SV,
    (WU, A.WAKE_UP_FAIL): DS,
}
WHITELIST = frozenset((s, a, t) for (s, a), t in TRANSITIONS.items())

# Power command issued together with a state action.
POWER_COMMAND: Dict[ActionKind, ActionKind] = {
    A.GO_STARTUP: A.POWER_ON,
    A.GO_WAKE_UP: A.POWER_ON,
    A.GO_DEEP_SLEEP: A.POWER_OFF,
    A.GO_COMPLETELY_OFF: A.POWER_OFF,
    A.STARTUP_FAIL: A.POWER_OFF,
    A.WAKE_UP_FAIL: A.POWER_OFF,
}

HOLD_ACTION = {CO: A.STAY_OFF, DS: A.STAY_SLEEP, SV: A.STAY_SERVING}


class IllegalTransition(RuntimeError):
    pass


class RadioCountMismatch(ValueError):
    pass


@dataclass(frozen=True)
class TransitionMatrix:
    """Phi: (state, action) -> distribution over next states.  Only the
    timer-expiry rows of Startup and WakeUp are stochastic."""
    p_fail_startup: float = 0.0
    p_fail_wakeup: float = 0.0

    def row(self, state: RadioState, action: Optional[ActionKind]) -> Dict[RadioState, float]:
        if action is None:
            return {state: 1.0}
        if (state, action) not in TRANSITIONS:
            raise IllegalTransition(f"{state.name} --{action.name}-->")
        if (state, action) == (SU, A.STARTUP_COMPLETE):
            return _drop_zero({SV: 1.0 - self.p_fail_startup, CO: self.p_fail_startup})
        if (state, action) == (WU, A.WAKE_UP_COMPLETE):
            return _drop_zero({SV: 1.0 - self.p_fail_wakeup, DS: self.p_fail_wakeup})
        return {TRANSITIONS[(state, action)]: 1.0}

    def expected_power(self, state: RadioState, action: Optional[ActionKind],
                       profile: Dict[RadioState, float]) -> float:
        return sum(p * profile[s] for s, p in self.row(state, action).items())


def _drop_zero(d):
    return {k: v for k, v in d.items() if v > 0}


def state_vector(states: Sequence[RadioState]) -> np.ndarray:
    """One-hot x[m, k] over the five sub-states (columns ordered by RadioState)."""
    x = np.zeros((len(states), len(RadioState)), dtype=np.int8)
    order = list(RadioState)
    for m, s in enumerate(states):
        x[m, order.index(s)] = 1
    return x


# --------------------------------------------------------------------------
# Trigger signals

def check_startup_trigger(serving_capacity: float, demand: float) -> bool:
    return serving_capacity < demand and demand > 0


def compute_sleep_signal(serving_capacity: float, demand: float, sleep_threshold: float) -> float:
    """Psi_rds = max(serving capacity - D, sleep threshold)."""
    return max(serving_capacity - demand, sleep_threshold)


def compute_wake_signal(sleeping_capacity: float, demand: float, wake_threshold: float) -> float:
    """Psi_w = max(sleeping capacity - D, wake threshold)."""
    return max(sleeping_capacity - demand, wake_threshold)


# --------------------------------------------------------------------------
# Controller

@dataclass
class ControllerConfig:
    p_fail_startup: float = 0.0
    p_fail_wakeup: float = 0.0
    moisture_seconds: float = 600.0  # daily powered maintenance of sleeping radios
    moisture_period: float = 86400.0

    @property
    def matrix(self) -> TransitionMatrix:
        return TransitionMatrix(self.p_fail_startup, self.p_fail_wakeup)


@dataclass(frozen=True)
class FiredTransition:
    tick: int
    node_id: str
    radio_id: str
    from_state: RadioState
    action: ActionKind
    to_state: RadioState
    label: str = "fsm"

    def to_json(self) -> str:
        return json.dumps({"tick": self.tick, "node": self.node_id, "radio": self.radio_id,
                           "from": self.from_state.name, "action": self.action.name,
                           "to": self.to_state.name, "label": self.label})


@dataclass
class StepResult:
    actions: Dict[str, List[ActionKind]]
    states: List[RadioState]
    power: float                 # W, post-action state powers
    moisture_energy: float = 0.0  # J charged this tick
    fired: List[FiredTransition] = field(default_factory=list)
    sleep_signal: Optional[float] = None
    wake_signal: Optional[float] = None
    woke: bool = False            # a wake-up or startup was triggered this tick

    @property
    def state_vector(self) -> np.ndarray:
        return state_vector(self.states)


def node_power(node: MicrowaveNode) -> float:
    return sum(r.power_profile[r.state] for r in node.radios)


class _Stepper:
    """Applies actions to one node, keeping the transition log."""

    def __init__(self, node: MicrowaveNode, tick: int, label: str = "fsm"):
        self.node = node
        self.tick = tick
        self.label = label
        self.actions: Dict[str, List[ActionKind]] = {r.id: [] for r in node.radios}
        self.fired: List[FiredTransition] = []

    def apply(self, radio: RadioUnit, action: ActionKind):
        key = (radio.state, action)
        if key not in TRANSITIONS:
            raise IllegalTransition(f"{radio.id}: {radio.state.name} --{action.name}-->")
        new = TRANSITIONS[key]
        self.actions[radio.id].append(action)
        if action in POWER_COMMAND:
            self.actions[radio.id].append(POWER_COMMAND[action])
        if new != radio.state:
            self.fired.append(FiredTransition(self.tick, self.node.id, radio.id, radio.state,
                                              action, new, self.label))
            radio.state = new
            radio.time_in_state = 0.0
            radio.idle_seconds = 0.0


def advance_timers(node: MicrowaveNode, dt: float, rng: np.random.Generator,
                   config: ControllerConfig, stepper: _Stepper) -> float:
    """Timer expiries, failures, the completely-off rule and the moisture
    charge.  Returns the moisture energy (J) charged this tick."""
    moisture = 0.0
    period = node.thresholds.completely_off_period
    for r in node.radios:
        r.time_in_state += dt
        if r.state == SU and r.time_in_state >= r.startup_duration:
            fail = config.p_fail_startup > 0 and rng.random() < config.p_fail_startup
            stepper.apply(r, A.STARTUP_FAIL if fail else A.STARTUP_COMPLETE)
        elif r.state == WU and r.time_in_state >= r.wakeup_duration:
            fail = config.p_fail_wakeup > 0 and rng.random() < config.p_fail_wakeup
            stepper.apply(r, A.WAKE_UP_FAIL if fail else A.WAKE_UP_COMPLETE)
        elif r.state == DS:
            before = r.idle_seconds
            r.idle_seconds += dt
            if config.moisture_seconds > 0 and (
                    int(r.idle_seconds // config.moisture_period) > int(before // config.moisture_period)):
                moisture += config.moisture_seconds * r.power_profile[SU]
            if r.idle_seconds >= period:
                stepper.apply(r, A.GO_COMPLETELY_OFF)
    return moisture


def _on_count(node: MicrowaveNode) -> int:
    return sum(1 for r in node.radios if r.state >= SU)


def _restore_floor(node: MicrowaveNode, order: Sequence[int], stepper: _Stepper) -> bool:
    """After a failed startup/wake-up left the node with no ON radio, bring
    the first radio in ``order`` back up.  Returns True if it acted."""
    if _on_count(node) > 0:
        return False
    r = node.radios[order[0]]
    stepper.apply(r, A.GO_WAKE_UP if r.state == DS else A.GO_STARTUP)
    return True


def step_controller(node: MicrowaveNode, demand: float, dt: float, rng: np.random.Generator,
                    capacities: Sequence[float], tick: int = 0,
                    config: Optional[ControllerConfig] = None,
                    keep_serving: Optional[Set[int]] = None) -> StepResult:
    """One control tick for an upstream node.

    ``capacities[m]`` is radio m's serving rate (bit/s).  ``keep_serving``
    optionally names radio indices that must not be put to sleep (the
    optimizer's target serving set).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    config = config or ControllerConfig()
    st = _Stepper(node, tick)
    moisture = advance_timers(node, dt, rng, config, st)
    radios = node.radios
    th = node.thresholds
    by_size = sorted(range(len(radios)), key=lambda m: (-capacities[m], m))
    floor_fix = _restore_floor(node, by_size, st)

    serving = [m for m, r in enumerate(radios) if r.state == SV]
    pending = [m for m, r in enumerate(radios) if r.state in (SU, WU)]
    sleeping = [m for m, r in enumerate(radios) if r.state == DS]
    off = [m for m, r in enumerate(radios) if r.state == CO]
    serving_cap = sum(capacities[m] for m in serving)
    pending_cap = serving_cap + sum(capacities[m] for m in pending)
    sleeping_cap = sum(capacities[m] for m in sleeping)

    woke = floor_fix
    wake_sig = sleep_sig = None
    if sleeping and not woke:
        big = max(sleeping, key=lambda m: (capacities[m], -m))
        wake_th = th.wake_for(capacities[big])
        wake_sig = compute_wake_signal(sleeping_cap, demand, wake_th)
        if pending_cap - demand < wake_th:
            st.apply(radios[big], A.GO_WAKE_UP)
            woke = True
    if not woke and off and check_startup_trigger(pending_cap, demand):
        big = max(off, key=lambda m: (capacities[m], -m))
        st.apply(radios[big], A.GO_STARTUP)
        woke = True

    if not woke and len(serving) > 0:
        for m in sorted(serving, key=lambda m: (capacities[m], m)):
            if keep_serving is not None and m in keep_serving:
                continue
            sleep_th = th.sleep_for(capacities[m])
            sleep_sig = compute_sleep_signal(serving_cap, demand, sleep_th)
            if serving_cap - capacities[m] - demand >= sleep_th and _on_count(node) > 1:
                st.apply(radios[m], A.GO_DEEP_SLEEP)
                break

    for r in radios:
        if not st.actions[r.id] and r.state in HOLD_ACTION:
            st.actions[r.id].append(HOLD_ACTION[r.state])
    return StepResult(st.actions, [r.state for r in radios], node_power(node), moisture,
                      st.fired, sleep_sig, wake_sig, woke)


def sync_states(upstream: Sequence[RadioState], downstream: MicrowaveNode, tick: int = 0,
                stepper: Optional[_Stepper] = None) -> Dict[str, List[ActionKind]]:
    """Issue downstream actions so radio m mirrors upstream radio m's
    physical intent, through legal intermediate states.  Actions that would
    leave the downstream node with no ON radio are refused."""
    if len(upstream) != len(downstream.radios):
        raise RadioCountMismatch(
            f"upstream has {len(upstream)} radios, {downstream.id} has {len(downstream.radios)}")
    st = stepper or _Stepper(downstream, tick, "sync")
    for want, r in zip(upstream, downstream.radios):
        if want.is_on:
            if r.state == DS:
                st.apply(r, A.GO_WAKE_UP)
            elif r.state == CO:
                st.apply(r, A.GO_STARTUP)
        elif r.state == SV:
            if _on_count(downstream) > 1:
                st.apply(r, A.GO_DEEP_SLEEP)
        elif want == CO and r.state == DS:
            st.apply(r, A.GO_COMPLETELY_OFF)
    return {k: v for k, v in st.actions.items() if v}


def step_follower(node: MicrowaveNode, upstream: Sequence[RadioState], dt: float,
                  rng: np.random.Generator, tick: int = 0,
                  config: Optional[ControllerConfig] = None) -> StepResult:
    """Downstream tick: advance timers, then mirror the upstream states."""
    config = config or ControllerConfig()
    st = _Stepper(node, tick, "sync")
    moisture = advance_timers(node, dt, rng, config, st)
    wanted = [m for m, s in enumerate(upstream) if s.is_on] + list(range(len(node.radios)))
    _restore_floor(node, wanted, st)
    sync_states(upstream, node, tick, st)
    woke = any(f.action in (A.GO_WAKE_UP, A.GO_STARTUP) for f in st.fired)
    return StepResult(st.actions, [r.state for r in node.radios], node_power(node), moisture,
                      st.fired, woke=woke)


def check_fired(fired: Iterable[FiredTransition]) -> List[FiredTransition]:
    """Transitions not on the whitelist (empty list means all legal)."""
    return [f for f in fired if (f.from_state, f.action, f.to_state) not in WHITELIST]
