"""Centre-of-inertia frequency model.

All powers are per unit on the system base; ``delta_w_pu`` is the per-unit
speed deviation and ``delta_f_hz = delta_w_pu * f_nominal_hz``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable

from .errors import ZeroInertiaConfig
from .units import TechSpec


@dataclass(frozen=True)
class GridFormingFallback:
    """First-order frequency behaviour imposed when no synchronous inertia is online."""

    tau_s: float = 0.1
    droop_pu: float = 20.0


@dataclass(frozen=True)
class FreqModel:
    h_sys_s: float
    d_load: float = 1.0
    f_nominal_hz: float = 50.0
    delta_w_pu: float = 0.0
    fallback: GridFormingFallback | None = None
    rocof_pu_s: float = 0.0

    @property
    def delta_f_hz(self):
        return self.delta_w_pu * self.f_nominal_hz

    @property
    def rocof_hz_s(self):
        return self.rocof_pu_s * self.f_nominal_hz


def step_frequency(model: FreqModel, p_gen_total_pu: float, p_load_total_pu: float,
                   dt: float) -> FreqModel:
    """Advance ``2H dΔω/dt = P_gen - P_load - D_load·Δω`` by one step.

    The step is exact for power held constant over ``dt``, which keeps the
    update stable for any damping.
    """
    if dt > 0.010 + 1e-12:
        raise ValueError("frequency step must be <= 10 ms")
    imbalance = p_gen_total_pu - p_load_total_pu
    w0 = model.delta_w_pu
    if model.h_sys_s > 0:
        two_h, damping = 2.0 * model.h_sys_s, model.d_load
    elif model.fallback is not None:
        fb = model.fallback
        damping = model.d_load + fb.droop_pu
        two_h = fb.tau_s * damping
    else:
        raise ZeroInertiaConfig("system inertia is zero and no grid-forming fallback is configured")

    if damping > 0:
        w_ss = imbalance / damping
        w1 = w_ss + (w0 - w_ss) * math.exp(-damping * dt / two_h)
    else:
        w1 = w0 + dt * imbalance / two_h
    return replace(model, delta_w_pu=w1, rocof_pu_s=(w1 - w0) / dt)


def online_inertia(units: Iterable[tuple[TechSpec, bool, float]], s_base_mva: float = 100.0) -> float:
    """Rating-weighted inertia (s, system base) of online synchronous units."""
    total = 0.0
    for spec, online, rating_mw in units:
        if online and spec.synchronous:
            total += spec.inertia_h_s * rating_mw
    return total / s_base_mva
