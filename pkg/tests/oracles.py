"""Independent reference computations used by the tests.

These are written from the defining formulas, without calling the code
under test, so a transcription slip in one route shows up as a mismatch."""

import itertools
import math

import numpy as np

C = 299792458.0


def symbol_time(mu):
    # one 1 ms subframe holds 2^mu slots of 14 symbols
    return 1e-3 / (14 * 2 ** mu)


def dmax_mbps(layers, q, scaling, r, overhead, mu, rbs, carriers=1):
    per_second = 12 * rbs / symbol_time(mu)
    return carriers * layers * q * scaling * r * per_second * (1 - overhead) / 1e6


def rbs_scan(demand_mbps, **kw):
    """Smallest n with dmax(n) >= demand by counting upward."""
    n = 0
    while dmax_mbps(rbs=n, **kw) < demand_mbps:
        n += 1
    return n


def fspl_db(d_m, f_hz):
    return 20 * math.log10(d_m) + 20 * math.log10(f_hz) - 147.55


def mcs_scan(table, delta, demand_bps, rbs, layers, scaling, overhead, mu, carriers=1):
    chosen, under = None, True
    for e in table:
        if e.snr_threshold > delta:
            break
        chosen = e
        rate = 1e6 * dmax_mbps(layers, e.modulation_order, scaling, e.code_rate, overhead, mu, rbs, carriers)
        if rate >= demand_bps:
            return e, False
    return chosen, under


def brute_serving(caps, serve_p, sleep_p, tx, tx_cap, demand, extra=0.0):
    """Minimum-power feasible serving pattern; ties go to larger capacity,
    then to the lexicographically 'more serving first' pattern."""
    best = None
    for pat in itertools.product((0, 1), repeat=len(caps)):
        if sum(pat) < 1:
            continue
        if sum(c for c, s in zip(caps, pat) if s) < demand:
            continue
        if sum(t for t, s in zip(tx, pat) if s) > sum(tx_cap):
            continue
        cost = sum(sp if s else lp for sp, lp, s in zip(serve_p, sleep_p, pat)) + extra
        key = (round(cost, 9), -sum(c for c, s in zip(caps, pat) if s), tuple(1 - s for s in pat))
        if best is None or key < best[0]:
            best = (key, pat, cost)
    return None if best is None else (best[1], best[2])


def lp_relaxation(caps, serve_p, sleep_p, tx, tx_cap, demand_gbps, extra=0.0):
    """Optimum of the [0,1]-relaxed serving problem.  For this separable
    problem the Lagrangian dual bound equals this value."""
    from scipy.optimize import linprog
    m = len(caps)
    c = np.array(serve_p) - np.array(sleep_p)
    A = [np.array(tx), -np.array(caps) / 1e9, -np.ones(m)]
    b = [sum(tx_cap), -demand_gbps, -1.0]
    res = linprog(c, A_ub=np.array(A), b_ub=np.array(b), bounds=[(0, 1)] * m, method="highs")
    if res.status != 0:
        return None
    return float(res.fun + sum(sleep_p) + extra)


def week_energy(power_w, seconds=604800):
    return power_w * seconds
