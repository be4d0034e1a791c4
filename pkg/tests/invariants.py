"""Randomized-demand fuzz of a controller node and a chain of followers,
with every FSM invariant checked tick by tick."""

import math

import numpy as np

from mwiab.domain import MicrowaveNode, PolicyThresholds, RadioState, RadioUnit
from mwiab.fsm import ControllerConfig, WHITELIST, check_fired, state_vector, step_controller, step_follower

CO, DS, SU, WU, SV = (RadioState.COMPLETELY_OFF, RadioState.DEEP_SLEEP, RadioState.STARTUP,
                      RadioState.WAKE_UP, RadioState.SERVING)


def make_chain(caps, hops=2, off_period=3000.0, startup=60.0, wakeup=10.0):
    th = PolicyThresholds(completely_off_period=off_period)
    nodes = []
    for h in range(hops):
        radios = [RadioUnit(f"n{h}-r{m}", 7.0 + m, 50e6, startup_duration=startup, wakeup_duration=wakeup)
                  for m in range(len(caps))]
        nodes.append(MicrowaveNode(f"n{h}", radios, f"n{h - 1}" if h else None,
                                   (f"n{h + 1}",) if h + 1 < hops else (), th))
    return nodes


def demand_walk(rng, ticks, top):
    """Piecewise-constant regimes with exponential holding times."""
    out = np.empty(ticks)
    t = 0
    while t < ticks:
        hold = int(rng.exponential(150)) + 1
        level = rng.choice([0.0, rng.uniform(0, 0.3), rng.uniform(0, 1.1)]) * top
        out[t:t + hold] = level
        t += hold
    return out


def fuzz(ticks=100_000, seed=0, caps=(3e8, 7e8, 1.2e9), dt=1.0, off_period=3000.0, hops=2):
    rng = np.random.default_rng(seed)
    nodes = make_chain(caps, hops, off_period)
    demand = demand_walk(rng, ticks, sum(caps))
    cfg = ControllerConfig(moisture_seconds=0)
    t4 = nodes[0].radios[0].startup_duration
    t5 = nodes[0].radios[0].wakeup_duration
    window = math.ceil(max(t4, t5) / dt) + 1
    violations = []
    entered = {}            # radio id -> (state, tick entered)
    ds_since = {}           # radio id -> tick of entering DS
    stable = [[0] * len(caps) for _ in nodes]   # ticks upstream radio kept its physical state
    prev_on = [[None] * len(caps) for _ in nodes]
    counts = {"transitions": 0, "retirements": 0, "timers": 0, "sync_checks": 0}
    for r in (r for n in nodes for r in n.radios):
        entered[r.id] = (r.state, 0)

    prev_states = None
    for t in range(ticks):
        res = [step_controller(nodes[0], demand[t], dt, rng, caps, tick=t, config=cfg)]
        for h in range(1, len(nodes)):
            up = prev_states[h - 1] if prev_states else [r.state for r in nodes[h - 1].radios]
            res.append(step_follower(nodes[h], up, dt, rng, tick=t, config=cfg))
        for h, (node, r_) in enumerate(zip(nodes, res)):
            x = state_vector(r_.states)
            if not (x.sum(axis=1) == 1).all():
                violations.append((t, node.id, "one-hot"))
            bad = check_fired(r_.fired)
            if bad:
                violations.append((t, node.id, f"non-whitelisted {bad}"))
            if node.on_count() < 1:
                violations.append((t, node.id, "on-floor"))
            for f in r_.fired:
                counts["transitions"] += 1
                radio = next(r for r in node.radios if r.id == f.radio_id)
                s0, t0 = entered[f.radio_id]
                if f.from_state in (SU, WU):
                    need = math.ceil((radio.startup_duration if f.from_state == SU else radio.wakeup_duration) / dt)
                    counts["timers"] += 1
                    if t - t0 != need:
                        violations.append((t, f.radio_id, f"{f.from_state.name} lasted {t - t0} ticks, not {need}"))
                if f.from_state == DS and f.to_state == CO:
                    counts["retirements"] += 1
                    if (t - t0) * dt != node.thresholds.completely_off_period:
                        violations.append((t, f.radio_id, f"retired after {(t - t0) * dt} s"))
                entered[f.radio_id] = (f.to_state, t)
            for r in node.radios:
                s0, t0 = entered[r.id]
                if r.state == DS and (t - t0) * dt > node.thresholds.completely_off_period:
                    violations.append((t, r.id, "overdue completely-off"))
        # sync: once an upstream radio has held its physical state for a full
        # window, the downstream peer must match it
        for h in range(1, len(nodes)):
            for m, (ru, rd) in enumerate(zip(nodes[h - 1].radios, nodes[h].radios)):
                stable[h][m] = stable[h][m] + 1 if prev_on[h][m] == ru.state else 0
                prev_on[h][m] = ru.state
                if stable[h][m] >= window:
                    counts["sync_checks"] += 1
                    if ru.state == SV and rd.state != SV:
                        violations.append((t, rd.id, f"not serving {stable[h][m]} ticks after upstream"))
                    if ru.state in (DS, CO) and rd.state.is_on and nodes[h].on_count() > 1:
                        violations.append((t, rd.id, f"still on {stable[h][m]} ticks after upstream slept"))
        prev_states = [[r.state for r in n.radios] for n in nodes]
    return violations, counts
