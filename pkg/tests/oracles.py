"""Independent reference implementations shared by the unit and acceptance tests."""

import itertools

import numpy as np

from dvpp.network import Bus, Line, Network
from dvpp.redispatch import DispatchUnit


def reference_flows(net, inj):
    """DC solve from an explicitly assembled Laplacian."""
    ids = [b.id for b in net.buses]
    pos = {b: k for k, b in enumerate(ids)}
    n = len(ids)
    B = np.zeros((n, n))
    for line in net.lines:
        i, j, y = pos[line.from_bus], pos[line.to_bus], 1.0 / line.reactance_pu
        B[i, i] += y
        B[j, j] += y
        B[i, j] -= y
        B[j, i] -= y
    P = np.array([inj.get(b, 0.0) for b in ids]) / net.s_base_mva
    keep = [k for k in range(n) if ids[k] != net.slack_bus]
    theta = np.zeros(n)
    theta[keep] = np.linalg.solve(B[np.ix_(keep, keep)], P[keep])
    return np.array([(theta[pos[l.from_bus]] - theta[pos[l.to_bus]]) / l.reactance_pu * net.s_base_mva
                     for l in net.lines])


def path_network(limits):
    n = len(limits) + 1
    return Network([Bus(k) for k in range(1, n + 1)],
                   [Line(k, k + 1, 0.1, float(lim)) for k, lim in enumerate(limits, start=1)], 1)


def enumerate_cost(units, loads, limits, target):
    """Brute force over integer set-points on a path network with the slack at bus 1."""
    best = None
    n_bus = len(limits) + 1
    ranges = [range(int(u.p_min), int(u.p_max) + 1) for u in units]
    for p in itertools.product(*ranges):
        if sum(p) != target:
            continue
        inj = np.zeros(n_bus)
        for u, v in zip(units, p):
            inj[u.bus - 1] += v
        for b, v in loads.items():
            inj[b - 1] += v
        # line k (bus k -> k+1) carries minus the net injection beyond it
        flows = [-inj[k + 1:].sum() for k in range(len(limits))]
        if any(abs(f) > lim + 1e-9 for f, lim in zip(flows, limits)):
            continue
        cost = sum(u.cost_per_mwh * v for u, v in zip(units, p))
        best = cost if best is None else min(best, cost)
    return best


def random_instance(rng):
    n_bus = int(rng.integers(2, 5))
    limits = [int(v) for v in rng.integers(3, 15, n_bus - 1)]
    units = []
    for i in range(int(rng.integers(1, 4))):
        lo = int(rng.integers(0, 3))
        units.append(DispatchUnit(f"u{i}", int(rng.integers(1, n_bus + 1)), float(rng.integers(5, 60)),
                                  float(lo), float(lo + rng.integers(2, 12))))
    target = int(rng.integers(int(sum(u.p_min for u in units)), int(sum(u.p_max for u in units)) + 1))
    loads = {}
    remaining = target
    for b in rng.permutation(np.arange(1, n_bus + 1))[:-1]:
        share = int(rng.integers(0, remaining + 1))
        loads[int(b)] = -share
        remaining -= share
    loads[n_bus] = loads.get(n_bus, 0) - remaining
    return units, loads, limits, target


def vertex_worst(offer, prof, penalty=50.0, firm=0.0):
    """Worst revenue over integer-budget price vertices and availability corners."""
    n = prof.periods
    mid, dev = prof.price_mid, prof.price_dev
    x = np.asarray(offer, dtype=float)
    worst = np.inf
    for zeta in itertools.product((-1.0, 0.0, 1.0), repeat=n):
        if sum(abs(z) for z in zeta) > prof.gamma + 1e-12:
            continue
        lam = mid + dev * np.array(zeta)
        for avail in itertools.product(*zip(prof.avail_low_mw, prof.avail_high_mw)):
            d = firm + np.array(avail)
            rev = lam @ np.minimum(x, d) - penalty * np.maximum(0.0, x - d).sum()
            worst = min(worst, rev)
    return worst
