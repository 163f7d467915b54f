"""DC network model: power flow, PTDF and line-outage sensitivities.

Angles are radians, injections and flows are MW, reactances are per unit on
``Network.s_base_mva``. Line results are keyed by position in ``Network.lines``
so parallel circuits stay distinguishable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import IslandingOutage, SingularNetwork, ValidationError

VOLTAGE_LEVELS = ("transmission", "distribution")


@dataclass(frozen=True)
class Bus:
    id: int
    voltage_level: str = "transmission"
    load_mw: float = 0.0

    def __post_init__(self):
        if self.voltage_level not in VOLTAGE_LEVELS:
            raise ValidationError(f"bus {self.id}: unknown voltage level {self.voltage_level!r}")
        if not np.isfinite(self.load_mw) or self.load_mw < 0:
            raise ValidationError(f"bus {self.id}: load must be finite and >= 0")


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    reactance_pu: float
    flow_limit_mw: float
    name: str = ""

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise ValidationError(f"line {self.name or ''} connects bus {self.from_bus} to itself")
        if not self.reactance_pu > 0:
            raise ValidationError(f"line {self.from_bus}-{self.to_bus}: reactance must be > 0")
        if not self.flow_limit_mw > 0:
            raise ValidationError(f"line {self.from_bus}-{self.to_bus}: flow limit must be > 0")

    @property
    def label(self):
        return self.name or f"{self.from_bus}-{self.to_bus}"


@dataclass(frozen=True)
class Network:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    slack_bus: int
    s_base_mva: float = 100.0
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise ValidationError("bus ids must be unique")
        index = {b: k for k, b in enumerate(ids)}
        object.__setattr__(self, "_index", index)
        if self.slack_bus not in index:
            raise ValidationError(f"slack bus {self.slack_bus} does not exist")
        if not self.s_base_mva > 0:
            raise ValidationError("s_base_mva must be > 0")
        for line in self.lines:
            for end in (line.from_bus, line.to_bus):
                if end not in index:
                    raise ValidationError(f"line {line.label} references unknown bus {end}")

    @property
    def bus_ids(self):
        return [b.id for b in self.buses]

    def bus_index(self, bus_id):
        return self._index[bus_id]

    def without_line(self, k):
        lines = self.lines[:k] + self.lines[k + 1:]
        return Network(self.buses, lines, self.slack_bus, self.s_base_mva)

    def components(self, skip_line=None):
        """Connected components as lists of bus ids."""
        parent = list(range(len(self.buses)))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for k, line in enumerate(self.lines):
            if k == skip_line:
                continue
            a, b = find(self._index[line.from_bus]), find(self._index[line.to_bus])
            if a != b:
                parent[a] = b
        groups = {}
        for b in self.buses:
            groups.setdefault(find(self._index[b.id]), []).append(b.id)
        return list(groups.values())

    def is_connected(self, skip_line=None):
        return len(self.components(skip_line)) == 1

    def check_connected(self):
        comps = self.components()
        if len(comps) > 1:
            raise SingularNetwork([c for c in comps if self.slack_bus not in c])

    def incidence(self):
        """Line-by-bus incidence matrix (+1 at from bus, -1 at to bus)."""
        a = np.zeros((len(self.lines), len(self.buses)))
        for k, line in enumerate(self.lines):
            a[k, self._index[line.from_bus]] = 1.0
            a[k, self._index[line.to_bus]] = -1.0
        return a

    def susceptance(self):
        a = self.incidence()
        b_line = np.array([1.0 / line.reactance_pu for line in self.lines])
        return a.T @ (b_line[:, None] * a), b_line, a


@dataclass(frozen=True)
class PowerFlow:
    angles: dict[int, float]
    flows: dict[int, float]
    slack_injection_mw: float

    def flow_vector(self):
        return np.array([self.flows[k] for k in sorted(self.flows)])


def _injection_vector(net, injections):
    p = np.zeros(len(net.buses))
    for bus, mw in injections.items():
        try:
            p[net.bus_index(bus)] += float(mw)
        except KeyError:
            raise ValidationError(f"injection at unknown bus {bus}") from None
    return p


def solve_dc_power_flow(net: Network, injections: Mapping[int, float]) -> PowerFlow:
    """Solve B·θ = P with θ_slack = 0; the slack bus absorbs any imbalance."""
    net.check_connected()
    p = _injection_vector(net, injections)
    s = net.bus_index(net.slack_bus)
    p[s] -= p.sum()
    bbus, b_line, a = net.susceptance()
    keep = [k for k in range(len(net.buses)) if k != s]
    theta = np.zeros(len(net.buses))
    if keep:
        theta[keep] = np.linalg.solve(bbus[np.ix_(keep, keep)], p[keep] / net.s_base_mva)
    flows = b_line * (a @ theta) * net.s_base_mva
    return PowerFlow(
        angles={b.id: float(theta[i]) for i, b in enumerate(net.buses)},
        flows={k: float(f) for k, f in enumerate(flows)},
        slack_injection_mw=float(p[s]),
    )


def ptdf(net: Network) -> np.ndarray:
    """Line × bus sensitivities of flow (MW) to injection (MW) withdrawn at the slack."""
    net.check_connected()
    bbus, b_line, a = net.susceptance()
    s = net.bus_index(net.slack_bus)
    keep = [k for k in range(len(net.buses)) if k != s]
    x = np.zeros_like(bbus)
    if keep:
        x[np.ix_(keep, keep)] = np.linalg.inv(bbus[np.ix_(keep, keep)])
    return (b_line[:, None] * a) @ x


def lodf(net: Network, ptdf_matrix=None) -> np.ndarray:
    """Line outage distribution factors.

    Column k gives the change in every line's flow per MW of pre-outage flow on
    line k. Columns of islanding lines are NaN.
    """
    h = ptdf(net) if ptdf_matrix is None else ptdf_matrix
    a = net.incidence()
    # flow on line l caused by a 1 MW transfer from the ends of line k
    transfer = h @ a.T
    out = np.full((len(net.lines), len(net.lines)), np.nan)
    for k in range(len(net.lines)):
        denom = 1.0 - transfer[k, k]
        if abs(denom) < 1e-10 or not net.is_connected(skip_line=k):
            continue
        out[:, k] = transfer[:, k] / denom
        out[k, k] = -1.0
    return out


def line_outage_flows(net: Network, injections: Mapping[int, float], outaged_line: int,
                      lodf_matrix=None) -> dict[int, float]:
    """Post-outage flows on the remaining lines, from distribution factors."""
    if not net.is_connected(skip_line=outaged_line):
        raise IslandingOutage(outaged_line)
    base = solve_dc_power_flow(net, injections).flow_vector()
    factors = lodf(net) if lodf_matrix is None else lodf_matrix
    post = base + factors[:, outaged_line] * base[outaged_line]
    return {k: float(post[k]) for k in range(len(net.lines)) if k != outaged_line}


def non_islanding_lines(net: Network) -> list[int]:
    return [k for k in range(len(net.lines)) if net.is_connected(skip_line=k)]


def bus_balance_residuals(net: Network, injections: Mapping[int, float], flow: PowerFlow) -> dict[int, float]:
    """Injection minus net outflow at every bus (slack uses its absorbed injection)."""
    p = _injection_vector(net, injections)
    s = net.bus_index(net.slack_bus)
    p[s] -= p.sum()
    out = net.incidence().T @ flow.flow_vector()
    return {b.id: float(p[i] - out[i]) for i, b in enumerate(net.buses)}
