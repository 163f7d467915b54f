"""Decentralised matching of an aggregate droop + virtual inertia response.

The aggregate specification ``C_des(s) = D + H·s/(1 + τ_f·s)`` maps the per-unit
frequency drop (−Δf) to a per-unit power increase on the system base. It is
split over devices by dynamic participation factors ``m_i(s)`` that sum to one
at every frequency: slow units share a low-pass ``1/(1 + T·s)``, fast units the
complementary high-pass. Each device then gets a local controller
``K_i = m_i·C_des/Ĝ_i`` that inverts its nominal first-order lag ``Ĝ_i``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import AllUnitsFailed, NoHeadroom, ValidationError
from .tf import DiscreteFilter, TransferFunction, bilinear, first_order_lag
from .units import TechSpec

log = logging.getLogger(__name__)

FAST, SLOW, SINGLE = "fast", "slow", "single"


class SpecDegradationWarning(UserWarning):
    """A renormalisation moved mass onto units that cannot honour its bandwidth."""


class EmptyPoolWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DvppSpec:
    droop_d: float
    inertia_h: float
    filter_tau_s: float = 0.5
    split_tau_s: float | None = None

    def __post_init__(self):
        if self.droop_d < 0 or self.inertia_h < 0:
            raise ValidationError("droop and inertia must be >= 0")
        if not self.filter_tau_s > 0:
            raise ValidationError("filter_tau_s must be > 0")
        if self.split_tau_s is not None and not self.split_tau_s > 0:
            raise ValidationError("split_tau_s must be > 0")

    @property
    def is_zero(self):
        return self.droop_d == 0 and self.inertia_h == 0

    def desired(self) -> TransferFunction:
        tau = self.filter_tau_s
        return TransferFunction([self.droop_d * tau + self.inertia_h, self.droop_d], [tau, 1.0])


@dataclass(frozen=True)
class ParticipationFactor:
    unit_id: str
    filter: TransferFunction
    static_weight: float
    pool: str = SINGLE
    headroom_mw: float = 0.0
    split_tau_s: float | None = None

    @property
    def num(self):
        return self.filter.num.tolist()

    @property
    def den(self):
        return self.filter.den.tolist()


@dataclass(frozen=True)
class UnitInfo:
    """What the participation design needs to know about one device."""

    unit_id: str
    spec: TechSpec
    headroom_mw: float

    @property
    def tau_s(self):
        return self.spec.tau_s


def _pool_filter(pool, weight, split_tau):
    if pool == SLOW:
        return TransferFunction([weight], [split_tau, 1.0])
    if pool == FAST:
        return TransferFunction([weight * split_tau, 0.0], [split_tau, 1.0])
    return TransferFunction.constant(weight)


def _weights(members):
    total = sum(u.headroom_mw for u in members)
    return {u.unit_id: u.headroom_mw / total for u in members}


def partition_units(units: Sequence[UnitInfo], split_tau_s: float | None = None):
    """Split units into (fast, slow, split time constant)."""
    if split_tau_s is not None:
        fast = [u for u in units if u.tau_s < split_tau_s]
        slow = [u for u in units if u.tau_s >= split_tau_s]
        return fast, slow, split_tau_s
    fast = [u for u in units if not u.spec.synchronous]
    slow = [u for u in units if u.spec.synchronous]
    if fast and slow:
        split = math.sqrt(max(u.tau_s for u in fast) * min(u.tau_s for u in slow))
    else:
        split = None
    return fast, slow, split


def design_participation(units: Sequence[UnitInfo], spec: DvppSpec) -> list[ParticipationFactor]:
    """Complementary low/high-pass pools with headroom-proportional weights inside each pool."""
    active = [u for u in units if u.headroom_mw > 0]
    if not active:
        raise NoHeadroom("no unit has positive headroom")
    fast, slow, split = partition_units(active, spec.split_tau_s)
    if not fast or not slow:
        if spec.split_tau_s is not None:
            warnings.warn(f"{'fast' if not fast else 'slow'} pool has no members; "
                          "using single-pool static weights", EmptyPoolWarning, stacklevel=2)
        w = _weights(active)
        return [ParticipationFactor(u.unit_id, _pool_filter(SINGLE, w[u.unit_id], None),
                                    w[u.unit_id], SINGLE, u.headroom_mw) for u in units if u in active]
    out = []
    for pool, members in ((SLOW, slow), (FAST, fast)):
        w = _weights(members)
        for u in members:
            out.append(ParticipationFactor(u.unit_id, _pool_filter(pool, w[u.unit_id], split),
                                           w[u.unit_id], pool, u.headroom_mw, split))
    order = {u.unit_id: k for k, u in enumerate(units)}
    return sorted(out, key=lambda f: order[f.unit_id])


def log_grid(n=200, lo=1e-3, hi=1e2):
    return np.logspace(math.log10(lo), math.log10(hi), n)


def partition_error(factors: Sequence[ParticipationFactor], omega=None) -> float:
    """max_ω |Σ m_i(jω) − 1|."""
    omega = log_grid() if omega is None else omega
    total = np.zeros(len(omega), dtype=complex)
    for f in factors:
        total += f.filter.freqresp(omega)
    return float(np.max(np.abs(total - 1.0)))


def renormalize_on_failure(factors: Sequence[ParticipationFactor], failed_unit: str,
                           headroom_mw: dict | None = None) -> list[ParticipationFactor]:
    """Hand the failed unit's share to the survivors of its pool.

    ``headroom_mw`` optionally updates the survivors' headroom before the
    weights are recomputed. If the pool empties, the other pool takes all mass
    as static weights and a :class:`SpecDegradationWarning` is issued.
    """
    if failed_unit not in {f.unit_id for f in factors}:
        raise KeyError(failed_unit)
    survivors = [f for f in factors if f.unit_id != failed_unit]
    if not survivors:
        raise AllUnitsFailed("every DVPP unit has failed")
    if headroom_mw:
        survivors = [replace(f, headroom_mw=headroom_mw.get(f.unit_id, f.headroom_mw)) for f in survivors]
    failed = next(f for f in factors if f.unit_id == failed_unit)
    pools = {f.pool for f in survivors}

    def reweighted(members, pool, split):
        total = sum(f.headroom_mw for f in members)
        if total <= 0:
            w = {f.unit_id: f.static_weight for f in members}
            s = sum(w.values())
            w = {k: v / s for k, v in w.items()} if s > 0 else {k: 1.0 / len(members) for k in w}
        else:
            w = {f.unit_id: f.headroom_mw / total for f in members}
        return [replace(f, filter=_pool_filter(pool, w[f.unit_id], split), static_weight=w[f.unit_id],
                        pool=pool, split_tau_s=split) for f in members]

    if failed.pool == SINGLE or failed.pool in pools:
        out = []
        for pool in (SLOW, FAST, SINGLE):
            members = [f for f in survivors if f.pool == pool]
            if members:
                out.extend(reweighted(members, pool, members[0].split_tau_s))
    else:
        if failed.pool == FAST:
            warnings.warn(f"fast pool emptied by failure of {failed_unit}; slow units now carry "
                          "high-frequency mass beyond their bandwidth", SpecDegradationWarning, stacklevel=2)
        else:
            log.info("slow pool emptied by failure of %s; fast units take the low-frequency mass", failed_unit)
        out = reweighted(survivors, SINGLE, None)
    order = {f.unit_id: k for k, f in enumerate(factors)}
    return sorted(out, key=lambda f: order[f.unit_id])


def matching_filter(factor: ParticipationFactor, spec: DvppSpec, unit_model: TransferFunction,
                    guard_tau_s: float) -> TransferFunction:
    """K_i = m_i·C_des/Ĝ_i, with extra poles at 1/guard_tau when the ratio is improper."""
    k = factor.filter * spec.desired() * unit_model.inverse()
    deficit = -k.relative_degree
    for _ in range(max(deficit, 0)):
        k = k * first_order_lag(guard_tau_s)
    return k


@dataclass(frozen=True)
class BroadcastSignal:
    delta_f_hz: float
    timestamp: float
    staleness_s: float = 0.0

    def read(self, now: float) -> "BroadcastSignal":
        return replace(self, staleness_s=max(0.0, now - self.timestamp))


@dataclass
class LocalController:
    """Discretised matching controller owned by one unit.

    Output is a per-unit power offset on the system base. The filters are
    stable and integrator-free, so only the output is clamped to headroom; the
    state keeps the unconstrained response and the output comes back inside
    the limits as soon as the unconstrained response does.
    """

    unit_id: str
    k: TransferFunction
    dt: float
    f_nominal_hz: float = 50.0
    up_pu: float = math.inf
    down_pu: float = math.inf
    timeout_s: float = 0.5
    last_output: float = 0.0
    saturated: bool = False
    stale: bool = False
    _filter: DiscreteFilter = field(init=False, repr=False)

    def __post_init__(self):
        b, a = bilinear(self.k, self.dt)
        self._filter = DiscreteFilter(b, a)

    @property
    def discrete(self):
        return self._filter

    def set_limits(self, down_pu: float, up_pu: float):
        self.down_pu = max(0.0, down_pu)
        self.up_pu = max(0.0, up_pu)

    def reset(self, delta_f_hz: float = 0.0):
        self._filter.reset(-delta_f_hz / self.f_nominal_hz)
        self.last_output = self._clamp(self._filter.b.sum() / self._filter.a.sum()
                                       * (-delta_f_hz / self.f_nominal_hz))

    def _clamp(self, y):
        self.saturated = y > self.up_pu or y < -self.down_pu
        return min(max(y, -self.down_pu), self.up_pu)

    def step(self, broadcast: BroadcastSignal) -> float:
        if broadcast.staleness_s > self.timeout_s:
            self.stale = True
            return self.last_output
        self.stale = False
        y = self._filter.step(-broadcast.delta_f_hz / self.f_nominal_hz)
        self.last_output = self._clamp(y)
        return self.last_output


def local_control_step(controller: LocalController, broadcast: BroadcastSignal, dt: float) -> float:
    if abs(dt - controller.dt) > 1e-12:
        raise ValueError(f"controller was discretised for dt={controller.dt}, got {dt}")
    return controller.step(broadcast)


def design_controllers(factors: Sequence[ParticipationFactor], spec: DvppSpec,
                       unit_specs: dict[str, TechSpec], dt: float,
                       f_nominal_hz: float = 50.0, timeout_s: float = 0.5,
                       guard_ratio: float = 10.0) -> list[LocalController]:
    out = []
    for f in factors:
        tech = unit_specs[f.unit_id]
        g = first_order_lag(tech.tau_s)
        k = matching_filter(f, spec, g, tech.tau_s / guard_ratio)
        out.append(LocalController(f.unit_id, k, dt, f_nominal_hz, timeout_s=timeout_s))
    return out


def evaluate_aggregate(factors: Sequence[ParticipationFactor], spec: DvppSpec,
                       controllers: Sequence[LocalController],
                       unit_models: dict[str, TransferFunction], omega=None) -> float:
    """max_ω |Σ K_i Ĝ_i − C_des| / |C_des| over the grid (default 1e-3…1e2 rad/s)."""
    if spec.is_zero:
        return 0.0
    omega = log_grid() if omega is None else np.asarray(omega, dtype=float)
    desired = spec.desired().freqresp(omega)
    total = np.zeros(len(omega), dtype=complex)
    for c in controllers:
        total += (c.k * unit_models[c.unit_id]).freqresp(omega)
    return float(np.max(np.abs(total - desired) / np.abs(desired)))


def unit_models_from_specs(unit_specs: dict[str, TechSpec]) -> dict[str, TransferFunction]:
    return {uid: first_order_lag(s.tau_s) for uid, s in unit_specs.items()}


@dataclass(frozen=True)
class Layer:
    name: str
    period_s: float


DEFAULT_LAYERS = (
    Layer("device control", 0.01),
    Layer("frequency service", 0.1),
    Layer("redispatch", 60.0),
    Layer("market", 3600.0),
)


def hierarchical_layers(periods: Sequence[float] | None = None, min_ratio: float = 10.0) -> list[Layer]:
    """Fastest-first layer cadence; each closed loop is the plant of the next layer."""
    if periods is None:
        layers = list(DEFAULT_LAYERS)
    else:
        if len(periods) != len(DEFAULT_LAYERS):
            raise ValidationError(f"expected {len(DEFAULT_LAYERS)} layer periods")
        layers = [Layer(d.name, float(p)) for d, p in zip(DEFAULT_LAYERS, periods)]
    for fast, slow in zip(layers, layers[1:]):
        ratio = slow.period_s / fast.period_s
        if ratio < min_ratio - 1e-9:
            raise ValidationError(f"{slow.name} period must be >= {min_ratio}x the {fast.name} period")
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValidationError(f"{slow.name} period must be an integer multiple of {fast.name}")
    return layers
