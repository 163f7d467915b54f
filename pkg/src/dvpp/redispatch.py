"""Security-constrained internal redispatch of DVPP units.

The dispatch is a linear program over unit set-points ``p``, held reserve
``r`` and, for every unit-outage contingency ``j``, the reserve deployment
``d^j`` that replaces the lost output. Line flows enter through PTDFs; line
outages through LODFs. A separate validator re-checks returned solutions by
full DC power-flow solves so the LP's own bookkeeping is never trusted.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import InfeasibleLP, ValidationError
from .lp import linprog
from .network import Network, lodf, ptdf, solve_dc_power_flow

log = logging.getLogger(__name__)

LP_TOL = 1e-8


class DispatchStatus(str, Enum):
    optimal = "optimal"
    infeasible = "infeasible"
    degraded = "degraded"


@dataclass(frozen=True)
class DispatchUnit:
    id: str
    bus: int
    cost_per_mwh: float
    p_min: float
    p_max: float
    reserve_cap: float | None = None  # physical ceiling that reserve may reach; defaults to p_max

    @property
    def cap(self):
        return self.p_max if self.reserve_cap is None else self.reserve_cap


@dataclass(frozen=True)
class DispatchProblem:
    network: Network
    units: tuple[DispatchUnit, ...]
    target_mw: float
    base_injections: dict[int, float] = field(default_factory=dict)
    line_contingencies: tuple[int, ...] = ()
    unit_contingencies: tuple[str, ...] = ()
    reserve_required_mw: float = 0.0
    contingency_limit_factor: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "units", tuple(self.units))
        object.__setattr__(self, "line_contingencies", tuple(self.line_contingencies))
        object.__setattr__(self, "unit_contingencies", tuple(self.unit_contingencies))
        ids = [u.id for u in self.units]
        if len(set(ids)) != len(ids):
            raise ValidationError("unit ids must be unique")
        for u in self.units:
            if u.p_min > u.p_max + 1e-12:
                raise ValidationError(f"unit {u.id}: p_min exceeds p_max")
            self.network.bus_index(u.bus)
        for j in self.unit_contingencies:
            if j not in ids:
                raise ValidationError(f"unit contingency references unknown unit {j}")

    @property
    def balance_feasible(self):
        lo = sum(u.p_min for u in self.units)
        hi = sum(u.p_max for u in self.units)
        return lo - 1e-9 <= self.target_mw <= hi + 1e-9


@dataclass
class DispatchSolution:
    status: DispatchStatus
    p_set: dict[str, float] = field(default_factory=dict)
    reserve_held: dict[str, float] = field(default_factory=dict)
    base_flows: dict[int, float] = field(default_factory=dict)
    worst_contingency_flows: dict[int, float] = field(default_factory=dict)
    deployments: dict[str, dict[str, float]] = field(default_factory=dict)
    objective: float = float("nan")
    binding: list[str] = field(default_factory=list)

    @property
    def ok(self):
        return self.status is not DispatchStatus.infeasible


class _Builder:
    """Assembles LP rows for a dispatch problem."""

    def __init__(self, problem: DispatchProblem, with_reserve=True, with_lines=True,
                 line_conts=None, unit_conts=None, line_subset=None):
        self.pb = problem
        net = problem.network
        self.n = len(problem.units)
        self.unit_conts = list(problem.unit_contingencies if unit_conts is None else unit_conts)
        self.line_conts = list(problem.line_contingencies if line_conts is None else line_conts)
        self.with_reserve = with_reserve
        self.with_lines = with_lines
        self.line_subset = line_subset
        self.nv = 2 * self.n + self.n * len(self.unit_conts)
        self.h = ptdf(net)
        self.lodf = lodf(net, self.h) if self.line_conts else None
        cols = np.zeros((len(net.buses), self.n))
        for i, u in enumerate(problem.units):
            cols[net.bus_index(u.bus), i] = 1.0
        self.unit_bus = cols
        base = np.zeros(len(net.buses))
        for bus, mw in problem.base_injections.items():
            base[net.bus_index(bus)] += mw
        self.base = base

    def p(self, i):
        return i

    def r(self, i):
        return self.n + i

    def d(self, k, i):
        return 2 * self.n + k * self.n + i

    def _row(self):
        return np.zeros(self.nv)

    def _flow_rows(self, sens, inj_const, limit, extra=None):
        """Append |sens·(base + unit_bus·p + extra) | <= limit."""
        coeff = sens @ self.unit_bus
        const = float(sens @ inj_const)
        row = self._row()
        row[:self.n] = coeff
        if extra is not None:
            for idx, val in extra:
                row[idx] += val
        self.a_ub.append(row)
        self.b_ub.append(limit - const)
        self.a_ub.append(-row)
        self.b_ub.append(limit + const)

    def build(self):
        pb, n = self.pb, self.n
        units = pb.units
        self.a_ub, self.b_ub = [], []
        limits = np.array([l.flow_limit_mw for l in pb.network.lines])
        cf = pb.contingency_limit_factor
        lines = range(len(limits)) if self.line_subset is None else self.line_subset

        a_eq = [np.concatenate([np.ones(n), np.zeros(self.nv - n)])]
        b_eq = [pb.target_mw]

        for i, u in enumerate(units):
            row = self._row()
            row[self.p(i)] = 1.0
            row[self.r(i)] = 1.0
            self.a_ub.append(row)
            self.b_ub.append(u.cap)

        if self.with_reserve and pb.reserve_required_mw > 0:
            row = self._row()
            row[n:2 * n] = -1.0
            self.a_ub.append(row)
            self.b_ub.append(-pb.reserve_required_mw)

        if self.with_lines:
            for l in lines:
                self._flow_rows(self.h[l], self.base, limits[l])
            for k in self.line_conts:
                for l in lines:
                    if l == k:
                        continue
                    sens = self.h[l] + self.lodf[l, k] * self.h[k]
                    self._flow_rows(sens, self.base, cf * limits[l])

        index = {u.id: i for i, u in enumerate(units)}
        for k, uid in enumerate(self.unit_conts):
            j = index[uid]
            row = np.zeros(self.nv)
            for i in range(n):
                if i != j:
                    row[self.d(k, i)] = 1.0
            row[self.p(j)] = -1.0
            a_eq.append(row)
            b_eq.append(0.0)
            for i in range(n):
                if i == j:
                    continue
                row = self._row()
                row[self.d(k, i)] = 1.0
                row[self.r(i)] = -1.0
                self.a_ub.append(row)
                self.b_ub.append(0.0)
            if self.with_lines:
                for l in lines:
                    extra = [(self.p(j), -self.h[l] @ self.unit_bus[:, j])]
                    extra += [(self.d(k, i), self.h[l] @ self.unit_bus[:, i]) for i in range(n) if i != j]
                    self._flow_rows(self.h[l], self.base, cf * limits[l], extra)

        bounds = [(u.p_min, u.p_max) for u in units]
        bounds += [(0.0, None)] * n
        for k, uid in enumerate(self.unit_conts):
            j = index[uid]
            bounds += [(0.0, 0.0 if i == j else None) for i in range(n)]
        a_ub = np.array(self.a_ub) if self.a_ub else None
        b_ub = np.array(self.b_ub) if self.b_ub else None
        return a_ub, b_ub, np.array(a_eq), np.array(b_eq), bounds


def _solve(builder: _Builder):
    """Cost-optimal solve, then a tie-break pass that prefers lower unit ids."""
    pb, n = builder.pb, builder.n
    a_ub, b_ub, a_eq, b_eq, bounds = builder.build()
    cost = np.zeros(builder.nv)
    cost[:n] = [u.cost_per_mwh for u in pb.units]
    first = linprog(cost, a_ub, b_ub, a_eq, b_eq, bounds)
    z = first.fun
    rank = np.argsort(np.argsort([u.id for u in pb.units]))
    tie = np.zeros(builder.nv)
    tie[:n] = rank + 1.0
    tie[n:2 * n] = 1e-3
    cap_row = cost[None, :]
    a2 = cap_row if a_ub is None else np.vstack([a_ub, cap_row])
    b2 = np.append([] if b_ub is None else b_ub, z + 1e-9 + 1e-12 * abs(z))
    try:
        second = linprog(tie, a2, b2, a_eq, b_eq, bounds)
        x = second.x
    except InfeasibleLP:  # numerical edge: keep the first optimum
        x = first.x
    return x


def _feasible(builder: _Builder) -> bool:
    a_ub, b_ub, a_eq, b_eq, bounds = builder.build()
    try:
        linprog(np.zeros(builder.nv), a_ub, b_ub, a_eq, b_eq, bounds)
        return True
    except InfeasibleLP:
        return False


def _diagnose(pb: DispatchProblem) -> list[str]:
    if not pb.balance_feasible:
        lo = sum(u.p_min for u in pb.units)
        hi = sum(u.p_max for u in pb.units)
        return [f"power balance: target {pb.target_mw:g} MW outside [{lo:g}, {hi:g}] MW"]
    base = _Builder(pb, with_reserve=False, line_conts=[], unit_conts=[])
    if not _feasible(base):
        names = []
        for l, line in enumerate(pb.network.lines):
            subset = [k for k in range(len(pb.network.lines)) if k != l]
            if _feasible(_Builder(pb, with_reserve=False, line_conts=[], unit_conts=[], line_subset=subset)):
                names.append(f"line limit {line.label}")
        return names or ["base-case line limits"]
    names = []
    for k in pb.line_contingencies:
        if not _feasible(_Builder(pb, with_reserve=False, line_conts=[k], unit_conts=[])):
            names.append(f"line contingency {pb.network.lines[k].label}")
    if names:
        return names
    if pb.reserve_required_mw > 0 and not _feasible(_Builder(pb, line_conts=[], unit_conts=[])):
        names.append(f"reserve requirement {pb.reserve_required_mw:g} MW")
    for uid in pb.unit_contingencies:
        if not _feasible(_Builder(pb, line_conts=[], unit_conts=[uid])):
            names.append(f"unit contingency {uid}")
    return names or ["combined security constraints"]


def solve_redispatch(problem: DispatchProblem) -> DispatchSolution:
    net = problem.network
    for k in problem.line_contingencies:
        if not net.is_connected(skip_line=k):
            return DispatchSolution(DispatchStatus.infeasible,
                                    binding=[f"line contingency {net.lines[k].label} islands the network"])
    status = DispatchStatus.optimal
    builder = _Builder(problem)
    try:
        x = _solve(builder)
    except InfeasibleLP:
        relaxed = _Builder(problem, with_reserve=False)
        try:
            x = _solve(relaxed)
        except InfeasibleLP:
            return DispatchSolution(DispatchStatus.infeasible, binding=_diagnose(problem))
        reasons = _diagnose(problem)
        log.warning("redispatch degraded; reserve requirement relaxed (%s)", ", ".join(reasons))
        builder = relaxed
        status = DispatchStatus.degraded
        binding = reasons
    else:
        binding = []
    return _package(problem, builder, x, status, binding)


def _package(pb, builder, x, status, binding):
    n = builder.n
    units = pb.units
    p = {u.id: float(x[i]) for i, u in enumerate(units)}
    r = {u.id: float(max(x[n + i], 0.0)) for i, u in enumerate(units)}
    deployments = {}
    for k, uid in enumerate(builder.unit_conts):
        deployments[uid] = {u.id: float(x[builder.d(k, i)]) for i, u in enumerate(units) if u.id != uid}
    inj = injections_for(pb, p)
    base = solve_dc_power_flow(pb.network, inj).flows
    worst = {l: abs(f) for l, f in base.items()}
    if builder.line_conts and builder.with_lines:
        fvec = np.array([base[l] for l in sorted(base)])
        for k in builder.line_conts:
            post = fvec + builder.lodf[:, k] * fvec[k]
            for l in range(len(fvec)):
                if l != k:
                    worst[l] = max(worst[l], abs(post[l]))
    for uid, dep in deployments.items():
        inj_c = injections_for(pb, {**p, uid: 0.0, **{i: p[i] + v for i, v in dep.items()}})
        for l, f in solve_dc_power_flow(pb.network, inj_c).flows.items():
            worst[l] = max(worst[l], abs(f))
    objective = sum(u.cost_per_mwh * p[u.id] for u in units)
    return DispatchSolution(status, p, r, base, worst, deployments, objective, binding)


def injections_for(pb: DispatchProblem, p_set: dict[str, float]) -> dict[int, float]:
    inj = dict(pb.base_injections)
    for u in pb.units:
        inj[u.bus] = inj.get(u.bus, 0.0) + p_set.get(u.id, 0.0)
    return inj


def validate_dispatch(pb: DispatchProblem, sol: DispatchSolution, tol: float = 1e-6) -> list[str]:
    """Independent feasibility check; returns the list of violated constraints."""
    bad = []
    if sol.status is DispatchStatus.infeasible:
        return ["solution is infeasible"]
    net = pb.network
    if abs(sum(sol.p_set.values()) - pb.target_mw) > tol:
        bad.append("power balance")
    for u in pb.units:
        p, r = sol.p_set[u.id], sol.reserve_held.get(u.id, 0.0)
        if p < u.p_min - tol or p > u.p_max + tol:
            bad.append(f"bounds {u.id}")
        if r < -tol or p + r > u.cap + tol:
            bad.append(f"reserve headroom {u.id}")
    enforce_reserve = sol.status is DispatchStatus.optimal
    if enforce_reserve and sum(sol.reserve_held.values()) < pb.reserve_required_mw - tol:
        bad.append("reserve requirement")
    limits = {k: l.flow_limit_mw for k, l in enumerate(net.lines)}
    inj = injections_for(pb, sol.p_set)
    for k, f in solve_dc_power_flow(net, inj).flows.items():
        if abs(f) > limits[k] + tol:
            bad.append(f"base flow {net.lines[k].label}")
    cf = pb.contingency_limit_factor
    for c in pb.line_contingencies:
        reduced = net.without_line(c)
        flows = solve_dc_power_flow(reduced, inj).flows
        others = [k for k in range(len(net.lines)) if k != c]
        for pos, k in enumerate(others):
            if abs(flows[pos]) > cf * limits[k] + tol:
                bad.append(f"contingency {net.lines[c].label}: flow {net.lines[k].label}")
    for uid in pb.unit_contingencies:
        dep = sol.deployments.get(uid)
        if dep is None:
            bad.append(f"unit contingency {uid}: no deployment")
            continue
        if abs(sum(dep.values()) - sol.p_set[uid]) > tol:
            bad.append(f"unit contingency {uid}: deployment does not cover lost output")
        for i, v in dep.items():
            if v < -tol or v > sol.reserve_held[i] + tol:
                bad.append(f"unit contingency {uid}: deployment of {i} exceeds reserve")
        post = {**sol.p_set, uid: 0.0}
        for i, v in dep.items():
            post[i] += v
        for k, f in solve_dc_power_flow(net, injections_for(pb, post)).flows.items():
            if abs(f) > cf * limits[k] + tol:
                bad.append(f"unit contingency {uid}: flow {net.lines[k].label}")
    return bad


@dataclass
class RedispatchTrigger:
    """Decides when the ~1 min redispatch loop should re-solve."""

    dvpp_rating_mw: float
    period_s: float = 60.0
    threshold_fraction: float = 0.05
    last_solve_s: float | None = None

    def should_solve(self, now: float, availability_change_mw: float = 0.0, unit_failed: bool = False) -> bool:
        if self.last_solve_s is None or unit_failed:
            return True
        if abs(availability_change_mw) > self.threshold_fraction * self.dvpp_rating_mw:
            return True
        return now - self.last_solve_s >= self.period_s - 1e-9

    def mark(self, now: float):
        self.last_solve_s = now


def trigger_policy(availability_changes_mw: Sequence[float], elapsed_s: float, dvpp_rating_mw: float,
                   unit_failed: bool = False, period_s: float = 60.0, threshold_fraction: float = 0.05) -> bool:
    """Stateless form of :class:`RedispatchTrigger` for a window since the last solve."""
    trig = RedispatchTrigger(dvpp_rating_mw, period_s, threshold_fraction, last_solve_s=0.0)
    change = sum(availability_changes_mw)
    big = any(abs(c) > threshold_fraction * dvpp_rating_mw for c in availability_changes_mw)
    return big or trig.should_solve(elapsed_s, change, unit_failed)
