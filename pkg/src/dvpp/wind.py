"""Variable-speed wind turbine with demanded-power tracking.

Quantities are per unit: power on the generator rating, speed on the rated
rotor speed, torque on their ratio. The rotor is integrated in kinetic-energy
form ``E = H ω²`` so that ``ΔE = ∫(p_aero − p_elec) dt`` holds to rounding.

Two operating strategies are provided:

* ``OS1`` varies generator torque only; the speed is held on its nominal
  trajectory by pitch.
* ``OS2`` moves speed and torque together. The speed target sits on the
  over-speed side of the Cp curve, where the aerodynamic power meets the
  demand at zero pitch; pitch only acts once the target hits its cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property

import numpy as np
from scipy.optimize import brentq, minimize_scalar

BETZ = 16.0 / 27.0
BETA_MAX_DEG = 45.0
OMEGA_MIN, OMEGA_MAX = 0.5, 1.2

STEP_SIZES = (-0.3, -0.2, -0.1, 0.1, 0.2, 0.3)
WIND_SPEEDS = (8.0, 12.0, 16.0)


class Strategy(str, Enum):
    OS1 = "OS1"
    OS2 = "OS2"


@dataclass(frozen=True)
class CpCurve:
    """Exponential Cp(λ, β) family, rescaled so its peak equals ``cp_max``."""

    c1: float = 0.5176
    c2: float = 116.0
    c3: float = 0.4
    c4: float = 5.0
    c5: float = 21.0
    c6: float = 0.0068
    cp_max: float = 0.48

    def __post_init__(self):
        if not 0 < self.cp_max <= BETZ:
            raise ValueError("cp_max must lie in (0, 16/27]")

    def raw(self, lam, beta_deg):
        inv = 1.0 / (lam + 0.08 * beta_deg) - 0.035 / (beta_deg ** 3 + 1.0)
        return self.c1 * (self.c2 * inv - self.c3 * beta_deg - self.c4) * math.exp(-self.c5 * inv) + self.c6 * lam

    @cached_property
    def lambda_opt(self) -> float:
        res = minimize_scalar(lambda l: -self.raw(l, 0.0), bounds=(2.0, 16.0), method="bounded",
                              options={"xatol": 1e-10})
        return float(res.x)

    @cached_property
    def scale(self) -> float:
        return self.cp_max / self.raw(self.lambda_opt, 0.0)

    def __call__(self, lam, beta_deg=0.0):
        if lam <= 0:
            return 0.0
        return min(BETZ, max(0.0, self.scale * self.raw(lam, beta_deg)))


@dataclass(frozen=True)
class TurbineParams:
    rotor_inertia_kgm2: float = 6.0e6
    rated_power_mw: float = 1.5
    rotor_radius_m: float = 50.0
    air_density: float = 1.225
    cp_curve: CpCurve = field(default_factory=CpCurve)
    rated_speed_rad_s: float | None = None  # default: optimal tip-speed ratio at rated wind
    torque_tau_s: float = 0.05
    pitch_tau_s: float = 0.2
    pitch_bandwidth_rad_s: float = 1.0
    pitch_damping: float = 0.8
    k_speed_os1: float = 0.5
    k_speed_os2: float = 2.0
    os2_speed_cap: float = 1.1
    infeasible_persistence_s: float = 0.5

    @property
    def area(self):
        return math.pi * self.rotor_radius_m ** 2

    @property
    def rated_wind_mps(self):
        """Wind speed at which peak Cp yields rated power."""
        p = self.rated_power_mw * 1e6
        return (p / (0.5 * self.air_density * self.area * self.cp_curve.cp_max)) ** (1.0 / 3.0)

    @property
    def omega_rated(self):
        if self.rated_speed_rad_s is not None:
            return self.rated_speed_rad_s
        return self.cp_curve.lambda_opt * self.rated_wind_mps / self.rotor_radius_m

    @property
    def inertia_h_s(self):
        return self.rotor_inertia_kgm2 * self.omega_rated ** 2 / (2.0 * self.rated_power_mw * 1e6)


def aero_power(params: TurbineParams, v: float, omega: float, beta_deg: float = 0.0) -> float:
    """Aerodynamic power in pu of rating; ``omega`` in pu of rated speed."""
    if v <= 0:
        return 0.0
    lam = omega * params.omega_rated * params.rotor_radius_m / v
    cp = params.cp_curve(lam, beta_deg)
    return 0.5 * params.air_density * params.area * cp * v ** 3 / (params.rated_power_mw * 1e6)


def nominal_speed(params: TurbineParams, v: float) -> float:
    """OS1 speed trajectory: optimal tip-speed ratio below rated, rated speed above."""
    w = params.cp_curve.lambda_opt * v / params.rotor_radius_m / params.omega_rated
    return min(max(w, OMEGA_MIN), 1.0)


def available_power(params: TurbineParams, v: float, strategy: Strategy) -> float:
    """Sustainable output at zero pitch within the strategy's speed range, capped at rating."""
    if strategy is Strategy.OS1:
        p = aero_power(params, v, nominal_speed(params, v))
    else:
        hi = params.os2_speed_cap
        res = minimize_scalar(lambda w: -aero_power(params, v, w), bounds=(OMEGA_MIN, hi), method="bounded",
                              options={"xatol": 1e-10})
        p = max(-res.fun, aero_power(params, v, hi))
    return min(p, 1.0)


def os2_speed_target(params: TurbineParams, v: float, p_ref: float) -> float:
    """Over-speed operating point with ``aero_power(ω, 0) = p_ref``, capped."""
    w_opt = params.cp_curve.lambda_opt * v / params.rotor_radius_m / params.omega_rated
    lo = min(max(w_opt, OMEGA_MIN), params.os2_speed_cap)
    hi = params.os2_speed_cap
    f = lambda w: aero_power(params, v, w) - p_ref  # noqa: E731
    if f(hi) >= 0:
        return hi
    if f(lo) <= 0:
        return lo
    return float(brentq(f, lo, hi, xtol=1e-12))


def equilibrium_pitch(params: TurbineParams, v: float, omega: float, p: float) -> float:
    f = lambda b: aero_power(params, v, omega, b) - p  # noqa: E731
    if f(0.0) <= 0:
        return 0.0
    if f(BETA_MAX_DEG) > 0:
        return BETA_MAX_DEG
    return float(brentq(f, 0.0, BETA_MAX_DEG, xtol=1e-12))


@dataclass(frozen=True)
class TurbineState:
    omega_g: float
    t_g: float
    v_wind: float
    p_ref: float
    strategy: Strategy = Strategy.OS1
    beta_deg: float = 0.0
    pitch_integral: float = 0.0
    p_ref_eff: float = 0.0
    infeasible_time_s: float = 0.0
    infeasible: bool = False
    speed_limited: bool = False
    p_aero: float = 0.0
    omega_ref: float = 1.0

    @property
    def p(self):
        return self.omega_g * self.t_g


def initial_state(params: TurbineParams, v: float, p_ref: float, strategy: Strategy | str) -> TurbineState:
    strategy = Strategy(strategy)
    p_eff = min(p_ref, available_power(params, v, strategy))
    w = nominal_speed(params, v) if strategy is Strategy.OS1 else os2_speed_target(params, v, p_eff)
    beta = equilibrium_pitch(params, v, w, p_eff)
    return TurbineState(omega_g=w, t_g=p_eff / w, v_wind=v, p_ref=p_ref, strategy=strategy, beta_deg=beta,
                        pitch_integral=beta, p_ref_eff=p_eff, p_aero=aero_power(params, v, w, beta), omega_ref=w)


def _pitch_gains(params, v, omega, beta):
    h = 0.25
    b0 = max(beta - h, 0.0)
    b1 = b0 + 2 * h
    g = (aero_power(params, v, omega, b1) - aero_power(params, v, omega, b0)) / (b1 - b0)
    g = min(g, -1e-3)  # power falls with pitch; keep the schedule bounded
    two_h = 2.0 * params.inertia_h_s
    wn, zeta = params.pitch_bandwidth_rad_s, params.pitch_damping
    return 2 * zeta * wn * two_h / -g, wn * wn * two_h / -g


def step_turbine(state: TurbineState, params: TurbineParams, dt: float,
                 available: float | None = None) -> TurbineState:
    """Advance the turbine by ``dt`` (at most 10 ms)."""
    if dt > 0.010 + 1e-12:
        raise ValueError("turbine step must be <= 10 ms")
    v = state.v_wind
    if available is None:
        available = available_power(params, v, state.strategy)
    short = state.p_ref > available + 1e-9
    p_eff = min(state.p_ref, available)
    inf_t = state.infeasible_time_s + dt if short else 0.0
    infeasible = state.infeasible or inf_t >= params.infeasible_persistence_s - 1e-12

    if state.strategy is Strategy.OS1:
        w_ref = nominal_speed(params, v)
        k_w = params.k_speed_os1
    else:
        w_ref = state.omega_ref if abs(p_eff - state.p_ref_eff) < 1e-15 else os2_speed_target(params, v, p_eff)
        k_w = params.k_speed_os2

    w = state.omega_g
    err = w - w_ref
    kp, ki = _pitch_gains(params, v, w, state.beta_deg)
    integ = min(max(state.pitch_integral + ki * err * dt, 0.0), BETA_MAX_DEG)
    beta_cmd = min(max(kp * err + integ, 0.0), BETA_MAX_DEG)
    beta = beta_cmd + (state.beta_deg - beta_cmd) * math.exp(-dt / params.pitch_tau_s)

    tg_cmd = max(p_eff / w + k_w * err, 0.0)
    t_g = tg_cmd + (state.t_g - tg_cmd) * math.exp(-dt / params.torque_tau_s)

    p_a = aero_power(params, v, w, state.beta_deg)
    p_e = w * state.t_g
    h = params.inertia_h_s
    energy = h * w * w + dt * (p_a - p_e)
    w_new = math.sqrt(max(energy, 0.0) / h)
    limited = False
    if w_new > OMEGA_MAX or w_new < OMEGA_MIN:
        w_new = min(max(w_new, OMEGA_MIN), OMEGA_MAX)
        limited = True
    return replace(state, omega_g=w_new, t_g=t_g, beta_deg=beta, pitch_integral=integ, p_ref_eff=p_eff,
                   infeasible_time_s=inf_t, infeasible=infeasible, speed_limited=state.speed_limited or limited,
                   p_aero=aero_power(params, v, w_new, beta), omega_ref=w_ref)


@dataclass
class StepTrace:
    strategy: Strategy
    v_mps: float
    dp_ref: float
    time_s: np.ndarray
    p: np.ndarray
    omega: np.ndarray
    omega_ref: np.ndarray
    t_g: np.ndarray
    p_aero: np.ndarray
    infeasible: bool
    speed_limited: bool

    @property
    def dp_normalized(self):
        return (self.p - self.p[0]) / self.dp_ref

    @property
    def final_normalized(self):
        return float(self.dp_normalized[-1])

    def settling_time(self, band=0.02):
        err = np.abs(self.dp_normalized - 1.0)
        outside = np.flatnonzero(err > band)
        if outside.size == 0:
            return 0.0
        if outside[-1] == err.size - 1:
            return math.nan
        return float(self.time_s[outside[-1] + 1])

    def kinetic_energy_error(self, h):
        """Relative mismatch between ΔE and ∫(p_aero − p) dt."""
        e = h * self.omega ** 2
        dt = np.diff(self.time_s)
        integral = np.sum((self.p_aero[:-1] - self.p[:-1]) * dt)
        de = e[-1] - e[0]
        scale = max(abs(de), np.sum(np.abs(self.p_aero[:-1] - self.p[:-1]) * dt), 1e-12)
        return abs(de - integral) / scale


def simulate_step(params: TurbineParams, strategy: Strategy | str, v: float, dp_ref: float,
                  p0: float = 0.7, duration_s: float = 40.0, dt: float = 0.01) -> StepTrace:
    strategy = Strategy(strategy)
    st = initial_state(params, v, p0, strategy)
    st = replace(st, p_ref=p0 + dp_ref)
    avail = available_power(params, v, strategy)
    n = int(round(duration_s / dt)) + 1
    cols = np.zeros((6, n))
    for k in range(n):
        cols[:, k] = (k * dt, st.p, st.omega_g, st.omega_ref, st.t_g, st.p_aero)
        if k < n - 1:
            st = step_turbine(st, params, dt, available=avail)
    return StepTrace(strategy, v, dp_ref, *cols, infeasible=st.infeasible, speed_limited=st.speed_limited)


def run_step_experiment(params: TurbineParams | None = None, strategy: Strategy | str = Strategy.OS1,
                        speeds=WIND_SPEEDS, steps=STEP_SIZES, p0: float = 0.7,
                        duration_s: float = 40.0, dt: float = 0.01) -> dict[tuple[float, float], StepTrace]:
    params = params or TurbineParams()
    return {(v, s): simulate_step(params, strategy, v, s, p0, duration_s, dt) for v in speeds for s in steps}
