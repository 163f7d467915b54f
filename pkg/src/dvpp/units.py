"""Per-technology unit dynamics.

Each unit tracks its power command through a first-order lag. The dispatch
class decides how primary-resource availability limits the output:

* A (PV): output never exceeds availability.
* B (wind): may exceed availability for a limited time budget.
* C (solar thermal): storage covers output above availability.
* D (hydro, biomass, thermal, geothermal): availability does not bind.
* E (pumped storage): output may be negative.

Commands come on two channels. ``p_cmd_mw`` is the scheduled set-point and is
capped below availability by the deloading reserve; ``p_fs_mw`` is the
frequency-service offset and may release that reserve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

from .errors import ValidationError

HOUR = 3600.0
INF = math.inf


class DispatchClass(str, Enum):
    A_hard_limited = "A"
    B_brief_overshoot = "B"
    C_storage_backed = "C"
    D_unconstrained_slow = "D"
    E_bidirectional = "E"


TECHS = ("PV", "ST", "W", "HYD", "BIO", "CF_TPS", "CC_TPS", "N_TPS", "PS_HPP", "GEO")
INTERFACES = ("PE", "SG", "SG_IG_PE")

DISPATCH_CLASS = {
    "PV": DispatchClass.A_hard_limited,
    "W": DispatchClass.B_brief_overshoot,
    "ST": DispatchClass.C_storage_backed,
    "BIO": DispatchClass.D_unconstrained_slow,
    "HYD": DispatchClass.D_unconstrained_slow,
    "CF_TPS": DispatchClass.D_unconstrained_slow,
    "CC_TPS": DispatchClass.D_unconstrained_slow,
    "N_TPS": DispatchClass.D_unconstrained_slow,
    "GEO": DispatchClass.D_unconstrained_slow,
    "PS_HPP": DispatchClass.E_bidirectional,
}

_MIN, _DAY, _WEEK, _MONTH = 60.0, 86400.0, 7 * 86400.0, 30 * 86400.0

# (response time range s, inherent storage range s, interface)
TABLE1 = {
    "PV": ((0.1, 5.0), (0.0, 0.0), "PE"),
    "ST": ((15 * _MIN, 4 * HOUR), (0.0, 24 * HOUR), "SG"),
    "W": ((0.5e-3, 1.0), (0.0, 0.0), "SG_IG_PE"),
    "HYD": ((2 * _MIN, 5 * _MIN), (4 * HOUR, 16 * HOUR), "SG"),
    "BIO": ((10 * _MIN, 6 * HOUR), (_WEEK, 4 * _WEEK), "SG"),
    "CF_TPS": ((80 * _MIN, 8 * HOUR), (_MONTH, 12 * _MONTH), "SG"),
    "CC_TPS": ((5 * _MIN, 3 * HOUR), (_MONTH, 12 * _MONTH), "SG"),
    "N_TPS": ((_DAY, _DAY), (_MONTH, 12 * _MONTH), "SG"),
    "PS_HPP": ((2 * _MIN, 5 * _MIN), (4 * HOUR, 16 * HOUR), "SG"),
    "GEO": ((30.0, 2 * _MIN), (INF, INF), "SG"),
}

# Inertia constants (s, on unit rating) for synchronous machines; configuration values, not measured data.
DEFAULT_INERTIA_S = {
    "ST": 4.0, "HYD": 3.5, "BIO": 4.0, "CF_TPS": 5.0, "CC_TPS": 5.0,
    "N_TPS": 6.0, "PS_HPP": 3.5, "GEO": 4.0,
}


def _geo_mean(lo, hi):
    if lo == hi:
        return lo
    if lo <= 0.0:
        return 0.5 * (lo + hi)  # geometric mean degenerates at zero
    return math.sqrt(lo * hi)


@dataclass(frozen=True)
class TechSpec:
    tech: str
    response_time_s: float
    inherent_storage_s: float
    interface: str
    inertia_h_s: float = 0.0
    lag_divisor: float = 3.0

    def __post_init__(self):
        if self.tech not in TECHS:
            raise ValidationError(f"unknown technology {self.tech!r}")
        if self.interface not in INTERFACES:
            raise ValidationError(f"unknown interface {self.interface!r}")
        if not self.response_time_s > 0:
            raise ValidationError(f"{self.tech}: response time must be > 0")
        if self.inherent_storage_s < 0:
            raise ValidationError(f"{self.tech}: inherent storage must be >= 0")

    @classmethod
    def default(cls, tech, **overrides):
        (r_lo, r_hi), (s_lo, s_hi), iface = TABLE1[tech]
        spec = cls(tech=tech, response_time_s=_geo_mean(r_lo, r_hi),
                   inherent_storage_s=_geo_mean(s_lo, s_hi) if s_lo != INF else INF,
                   interface=iface, inertia_h_s=DEFAULT_INERTIA_S.get(tech, 0.0))
        return replace(spec, **overrides) if overrides else spec

    @property
    def dispatch_class(self):
        return DISPATCH_CLASS[self.tech]

    @property
    def tau_s(self):
        """Lag time constant; the response time is reached at ~95 % settling."""
        return self.response_time_s / self.lag_divisor

    @property
    def synchronous(self):
        return self.interface == "SG"

    def within_table1(self, rel_tol=1e-9):
        (r_lo, r_hi), (s_lo, s_hi), _ = TABLE1[self.tech]
        ok_r = r_lo * (1 - rel_tol) <= self.response_time_s <= r_hi * (1 + rel_tol)
        if s_lo == INF:
            ok_s = self.inherent_storage_s == INF
        else:
            ok_s = s_lo * (1 - rel_tol) <= self.inherent_storage_s <= s_hi * (1 + rel_tol)
        return ok_r and ok_s


@dataclass(frozen=True)
class UnitState:
    p_out_mw: float
    p_cmd_mw: float
    p_avail_mw: float
    rating_mw: float
    energy_stored_mwh: float = 0.0
    storage_capacity_mwh: float = 0.0
    overload_budget_s: float = 10.0
    overload_budget_max_s: float = 10.0
    overload_fraction: float = 0.1
    reserve_fraction: float = 0.0
    p_fs_mw: float = 0.0
    saturated: bool = False
    online: bool = True
    overload_time_s: float = 0.0  # time spent above availability in the current window
    overload_locked: bool = False  # budget ran out; no overshoot until fully recovered

    def __post_init__(self):
        if self.p_avail_mw < 0:
            raise ValidationError("availability must be >= 0")
        if not 0.0 <= self.reserve_fraction < 1.0:
            raise ValidationError("reserve fraction must lie in [0, 1)")
        if self.energy_stored_mwh < 0:
            raise ValidationError("stored energy must be >= 0")


def _limits(state: UnitState, spec: TechSpec):
    """Return (floor, total ceiling, scheduled ceiling)."""
    cls = spec.dispatch_class
    rating = state.rating_mw
    if cls is DispatchClass.A_hard_limited:
        total = min(rating, state.p_avail_mw)
        ref = state.p_avail_mw
    elif cls is DispatchClass.B_brief_overshoot:
        if state.overload_budget_s > 0 and not state.overload_locked:
            total = state.p_avail_mw * (1.0 + state.overload_fraction)
        else:
            total = state.p_avail_mw
        total = min(total, rating * (1.0 + state.overload_fraction))
        ref = state.p_avail_mw
    elif cls is DispatchClass.C_storage_backed:
        total = rating if state.energy_stored_mwh > 0 else min(rating, state.p_avail_mw)
        ref = rating
    else:
        total = rating
        ref = rating
    floor = -rating if cls is DispatchClass.E_bidirectional else 0.0
    sched = max(floor, total - state.reserve_fraction * ref)
    return floor, total, sched


def step_unit(state: UnitState, spec: TechSpec, dt: float) -> UnitState:
    """Advance one unit by ``dt`` seconds.

    The lag is integrated exactly for a held target, so each step shrinks the
    tracking error by ``exp(-dt/tau)``. Infeasible commands are clamped and
    reported through ``saturated``.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if not state.online:
        return replace(state, p_out_mw=0.0, saturated=False)
    cls = spec.dispatch_class
    floor, total, sched = _limits(state, spec)
    requested = state.p_cmd_mw + state.p_fs_mw
    target = min(state.p_cmd_mw, sched) + state.p_fs_mw
    target = min(max(target, floor), total)
    saturated = abs(target - requested) > 1e-9

    p = target + (state.p_out_mw - target) * math.exp(-dt / spec.tau_s)

    # hard physical caps that the lag cannot smooth over
    if cls is DispatchClass.A_hard_limited:
        p = min(p, total, sched + max(state.p_fs_mw, 0.0))
    elif cls is DispatchClass.B_brief_overshoot:
        p = min(p, total)
    p = max(p, floor)

    energy = state.energy_stored_mwh
    if cls is DispatchClass.C_storage_backed:
        draw_mw = p - state.p_avail_mw
        if draw_mw > 0:
            available = energy * HOUR / dt
            if draw_mw > available:
                draw_mw = available
                p = state.p_avail_mw + draw_mw
                saturated = True
            energy -= draw_mw * dt / HOUR
        else:
            energy = min(state.storage_capacity_mwh, energy - draw_mw * dt / HOUR)
        energy = max(energy, 0.0)

    budget, over_t, locked = state.overload_budget_s, state.overload_time_s, state.overload_locked
    if cls is DispatchClass.B_brief_overshoot:
        if p > state.p_avail_mw + 1e-9:
            budget = max(0.0, budget - dt)
            over_t += dt
            locked = locked or budget == 0.0
        else:
            budget = min(state.overload_budget_max_s, budget + dt)
            if budget >= state.overload_budget_max_s:
                over_t = 0.0
                locked = False

    return replace(state, p_out_mw=p, energy_stored_mwh=energy, overload_budget_s=budget,
                   overload_time_s=over_t, overload_locked=locked, saturated=saturated)


def set_availability(state: UnitState, p_avail_mw: float) -> UnitState:
    if p_avail_mw < 0:
        raise ValidationError("availability must be >= 0")
    return replace(state, p_avail_mw=float(p_avail_mw))


@dataclass(frozen=True)
class Headroom:
    up_mw: float
    down_mw: float


def headroom(state: UnitState, spec: TechSpec, p_ref_mw: float | None = None) -> Headroom:
    """Sustainable room to move up and down from ``p_ref_mw`` (default: current output).

    The deloading reserve counts as upward room; the class B overload margin does not.
    """
    if not state.online:
        return Headroom(0.0, 0.0)
    floor, total, _ = _limits(state, spec)
    if spec.dispatch_class is DispatchClass.B_brief_overshoot:
        total = min(state.rating_mw, state.p_avail_mw)
    p = state.p_out_mw if p_ref_mw is None else p_ref_mw
    return Headroom(up_mw=max(0.0, min(state.rating_mw, total) - p), down_mw=max(0.0, p - floor))


def dispatch_bounds(state: UnitState, spec: TechSpec) -> tuple[float, float, float]:
    """(p_min, p_max for scheduling, physical cap for reserve) used by redispatch."""
    if not state.online:
        return 0.0, 0.0, 0.0
    floor, total, sched = _limits(state, spec)
    if spec.dispatch_class is DispatchClass.B_brief_overshoot:
        total = min(state.rating_mw, state.p_avail_mw)
        sched = max(floor, total - state.reserve_fraction * state.p_avail_mw)
    return floor, min(sched, state.rating_mw), min(total, state.rating_mw)


def trip(state: UnitState) -> UnitState:
    return replace(state, online=False, p_out_mw=0.0, p_cmd_mw=0.0, p_fs_mw=0.0)
