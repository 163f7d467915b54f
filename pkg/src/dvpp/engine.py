"""Fixed-step multi-rate simulation of a DVPP inside its grid.

One device tick (default 10 ms) runs, in order: scripted events, the market
layer, the redispatch layer, broadcast publication, local controllers, unit
dynamics and the centre-of-inertia swing equation. Slower layers only act on
ticks that are multiples of their period. Everything is deterministic; the
seed only drives the optional availability noise.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .coordination import (BroadcastSignal, DvppSpec, LocalController, UnitInfo, design_controllers,
                           design_participation, hierarchical_layers, partition_error, renormalize_on_failure)
from .errors import DvppError, NoDisturbance, ValidationError
from .frequency import FreqModel, GridFormingFallback, online_inertia, step_frequency
from .network import Network, non_islanding_lines, ptdf
from .redispatch import (DispatchProblem, DispatchStatus, DispatchUnit, RedispatchTrigger, solve_redispatch)
from .scenario import Scenario, SimEvent, validate_event
from .units import TechSpec, UnitState, dispatch_bounds, headroom, set_availability, step_unit, trip

log = logging.getLogger(__name__)

NOISY_TECHS = ("PV", "W")


class SimulationError(DvppError):
    """A module error raised while applying an event or layer update."""


@dataclass(frozen=True)
class NoiseConfig:
    """Ornstein-Uhlenbeck relative perturbation of PV and wind availability."""

    sigma: float = 0.02
    theta_s: float = 60.0


@dataclass(frozen=True)
class SimConfig:
    duration_s: float = 60.0
    dt_device_s: float = 0.01
    dt_freq_s: float = 0.1
    dt_redispatch_s: float = 60.0
    dt_market_s: float = 3600.0
    seed: int = 0
    sample_period_s: float | None = None  # default: every device tick
    broadcast_timeout_s: float = 0.5
    noise: NoiseConfig | None = None
    market_targets_mw: tuple[float, ...] | None = None  # one DVPP target per market period
    frequency_profile: Callable[[float], float] | None = None  # forces Δf(t) in Hz
    redispatch: bool = True

    def __post_init__(self):
        periods = (self.dt_device_s, self.dt_freq_s, self.dt_redispatch_s, self.dt_market_s)
        if any(p <= 0 for p in periods):
            raise ValidationError("layer periods must be > 0")
        hierarchical_layers(periods)
        if self.duration_s <= 0:
            raise ValidationError("duration must be > 0")
        if self.sample_period_s is not None:
            r = self.sample_period_s / self.dt_device_s
            if r < 1 - 1e-9 or abs(r - round(r)) > 1e-9:
                raise ValidationError("sample period must be an integer multiple of the device step")

    def ratio(self, period):
        return int(round(period / self.dt_device_s))

    @property
    def n_ticks(self):
        return int(round(self.duration_s / self.dt_device_s))


@dataclass
class SimTrace:
    """Sampled simulation record; ``columns`` maps column name to an array."""

    columns: dict[str, np.ndarray]
    events: list[tuple[float, str]] = field(default_factory=list)
    dispatch: list[dict] = field(default_factory=list)
    controllers: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def time_s(self):
        return self.columns["time_s"]

    @property
    def delta_f_hz(self):
        return self.columns["delta_f_hz"]

    def __getitem__(self, key):
        return self.columns[key]

    @classmethod
    def from_series(cls, time_s, delta_f_hz, event_time_s=None, rocof_hz_s=None):
        time_s = np.asarray(time_s, dtype=float)
        df = np.asarray(delta_f_hz, dtype=float)
        rocof = np.gradient(df, time_s) if rocof_hz_s is None else np.asarray(rocof_hz_s, dtype=float)
        events = [] if event_time_s is None else [(float(event_time_s), "disturbance")]
        return cls({"time_s": time_s, "delta_f_hz": df, "rocof_hz_s": rocof,
                    "unserved_mw": np.zeros_like(df)}, events)


def _line_col(net: Network, k: int) -> str:
    return f"flow_{k}_{net.lines[k].from_bus}_{net.lines[k].to_bus}_mw"


class Simulator:
    def __init__(self, scenario: Scenario, spec: DvppSpec | None = None,
                 events: Sequence[SimEvent] = (), config: SimConfig = SimConfig()):
        self.sc = scenario
        self.cfg = config
        self.spec = spec or scenario.dvpp
        for ev in events:
            validate_event(ev, scenario, config.duration_s)
        self.events = sorted(events, key=lambda e: e.time_s)
        self._next_event = 0
        self.s_base = scenario.network.s_base_mva
        self.base_net = scenario.network
        self.outaged: set[int] = set()
        self.net = scenario.network
        self._ptdf = ptdf(self.net)
        self._line_map = list(range(len(self.net.lines)))
        self.loads = {b.id: b.load_mw for b in scenario.network.buses}
        self.tech: dict[str, TechSpec] = {u.id: u.tech_spec() for u in scenario.units}
        self.cfg_units = {u.id: u for u in scenario.units}
        self.dvpp_ids = [u.id for u in scenario.dvpp_units]
        self.order = [u.id for u in scenario.units]
        self.states: dict[str, UnitState] = {u.id: u.initial_state() for u in scenario.units}
        self.base_avail = {u.id: u.availability for u in scenario.units}
        self.rng = np.random.default_rng(config.seed)
        self.noise_x = {uid: 0.0 for uid in self.dvpp_ids if self.tech[uid].tech in NOISY_TECHS}
        fc = scenario.frequency
        fallback = None
        if fc.grid_forming_tau_s is not None:
            fallback = GridFormingFallback(fc.grid_forming_tau_s, fc.grid_forming_droop_pu)
        self.freq = FreqModel(self._inertia(), fc.d_load, fc.f_nominal_hz, fallback=fallback)
        self.trace_events: list[tuple[float, str]] = []
        self.dispatch_log: list[dict] = []
        self.ctrl_log: list[dict] = []
        self.target_mw = self._default_target()
        self.trigger = RedispatchTrigger(scenario.dvpp_rating_mw, config.dt_redispatch_s,
                                         scenario.redispatch.trigger_fraction)
        self._pending_redispatch = False
        self.t = 0.0
        if config.market_targets_mw:
            self.target_mw = float(config.market_targets_mw[0])
        if config.redispatch:
            sol = self._redispatch(0.0, initial=True)
            if sol.status is DispatchStatus.infeasible:
                raise SimulationError("initial dispatch infeasible: " + "; ".join(sol.binding))
        for uid in self.dvpp_ids:
            s = self.states[uid]
            self.states[uid] = replace(s, p_out_mw=s.p_cmd_mw)
        self.factors = []
        self.controllers: dict[str, LocalController] = {}
        self._design(reset_df=0.0)
        self.broadcast = BroadcastSignal(0.0, 0.0)

    # ---------------------------------------------------------------- helpers

    def _inertia(self):
        return online_inertia(((self.tech[uid], self.states[uid].online, self.cfg_units[uid].rating_mw)
                               for uid in self.order), self.s_base)

    def _default_target(self):
        other = sum(self.states[u.id].p_cmd_mw for u in self.sc.other_units)
        return sum(self.loads.values()) - other

    def _headroom(self, uid):
        st = self.states[uid]
        return headroom(st, self.tech[uid], p_ref_mw=st.p_cmd_mw)

    def _online_dvpp(self):
        return [uid for uid in self.dvpp_ids if self.states[uid].online]

    def _design(self, reset_df: float, factors=None):
        online = self._online_dvpp()
        if factors is None:
            infos = [UnitInfo(uid, self.tech[uid], self._headroom(uid).up_mw) for uid in online]
            factors = design_participation(infos, self.spec)
        self.factors = factors
        ctrls = design_controllers(factors, self.spec, {uid: self.tech[uid] for uid in online},
                                   self.cfg.dt_device_s, self.freq.f_nominal_hz, self.cfg.broadcast_timeout_s)
        self.controllers = {c.unit_id: c for c in ctrls}
        for c in ctrls:
            self._set_limits(c)
            c.reset(reset_df)

    def _set_limits(self, c: LocalController):
        h = self._headroom(c.unit_id)
        c.set_limits(h.down_mw / self.s_base, h.up_mw / self.s_base)

    def _problem(self) -> DispatchProblem:
        units = []
        for uid in self._online_dvpp():
            st, ucfg = self.states[uid], self.cfg_units[uid]
            lo, hi, cap = dispatch_bounds(st, self.tech[uid])
            if ucfg.p_min_mw is not None:
                lo = max(lo, ucfg.p_min_mw)
            units.append(DispatchUnit(uid, ucfg.bus, ucfg.cost_per_mwh, lo, max(lo, hi), max(cap, hi)))
        base = {b: -l for b, l in self.loads.items()}
        for u in self.sc.other_units:
            if self.states[u.id].online:
                base[u.bus] = base.get(u.bus, 0.0) + self.states[u.id].p_cmd_mw
        rc = self.sc.redispatch
        reserve = rc.reserve_mw
        if reserve is None:
            reserve = max((self.states[u].p_cmd_mw for u in self._online_dvpp()), default=0.0)
        lc = self.sc.line_contingency_list() if not self.outaged else tuple(non_islanding_lines(self.net))
        if rc.line_contingencies == "none":
            lc = ()
        uc = tuple(self._online_dvpp()) if rc.unit_contingencies else ()
        return DispatchProblem(self.net, units, self.target_mw, base, lc, uc, reserve)

    def _redispatch(self, t, initial=False):
        sol = solve_redispatch(self._problem())
        self.trigger.mark(t)
        if sol.status is not DispatchStatus.infeasible:
            for uid, p in sol.p_set.items():
                self.states[uid] = replace(self.states[uid], p_cmd_mw=p)
        else:
            log.warning("t=%.2f s: redispatch infeasible (%s); set-points held", t, "; ".join(sol.binding))
        for uid in self._online_dvpp():
            self.dispatch_log.append({"time_s": t, "unit_id": uid, "p_set_mw": self.states[uid].p_cmd_mw,
                                      "reserve_mw": sol.reserve_held.get(uid, 0.0), "status": sol.status.value,
                                      "objective": sol.objective})
        if not initial:
            for c in self.controllers.values():
                self._set_limits(c)
        return sol

    # ---------------------------------------------------------------- events

    def _apply(self, ev: SimEvent):
        t = self.t
        self.trace_events.append((t, ev.describe()))
        p = ev.payload
        try:
            if ev.kind == "unit_trip":
                uid = p["unit"]
                if not self.states[uid].online:
                    return
                self.states[uid] = trip(self.states[uid])
                self.freq = replace(self.freq, h_sys_s=self._inertia())
                if uid in self.controllers:
                    hr = {u: self._headroom(u).up_mw for u in self._online_dvpp()}
                    factors = renormalize_on_failure(self.factors, uid, hr)
                    self._design(self.freq.delta_f_hz, factors)
                    self._pending_redispatch = True
            elif ev.kind == "availability_change":
                uid = p["unit"]
                old = self.states[uid].p_avail_mw
                new = float(p["availability_mw"])
                self.base_avail[uid] = new
                self.states[uid] = set_availability(self.states[uid], new)
                if uid in self.dvpp_ids and self.trigger.should_solve(t, new - old):
                    self._pending_redispatch = True
            elif ev.kind == "load_step":
                bus = p["bus"]
                self.loads[bus] = max(0.0, self.loads[bus] + float(p["delta_mw"]))
            elif ev.kind == "line_outage":
                k = int(p["line"])
                if k in self.outaged:
                    return
                remaining = [j for j in self._line_map if j != k]
                lines = tuple(self.base_net.lines[j] for j in remaining)
                net = Network(self.base_net.buses, lines, self.base_net.slack_bus, self.s_base)
                net.check_connected()
                self.outaged.add(k)
                self.net, self._line_map = net, remaining
                self._ptdf = ptdf(net)
                self._pending_redispatch = True
            elif ev.kind == "spec_change":
                self.spec = replace(self.spec, **{k: float(v) for k, v in p.items()})
                self._design(self.freq.delta_f_hz)
        except DvppError as exc:
            raise SimulationError(f"{ev.describe()}: {exc}") from exc

    # ---------------------------------------------------------------- loop

    def _noise_step(self, dt):
        n = self.cfg.noise
        for uid in self.noise_x:
            x = self.noise_x[uid]
            a = math.exp(-dt / n.theta_s)
            x = a * x + n.sigma * math.sqrt(1.0 - a * a) * self.rng.standard_normal()
            self.noise_x[uid] = x
            if self.states[uid].online:
                avail = max(0.0, self.base_avail[uid] * (1.0 + x))
                self.states[uid] = set_availability(self.states[uid], avail)

    def _flows(self):
        inj = np.zeros(len(self.net.buses))
        for b, l in self.loads.items():
            inj[self.net.bus_index(b)] -= l
        for uid in self.order:
            st = self.states[uid]
            if st.online:
                inj[self.net.bus_index(self.cfg_units[uid].bus)] += st.p_out_mw
        f = self._ptdf @ inj
        out = np.zeros(len(self.base_net.lines))
        out[self._line_map] = f
        return out

    def _sample(self, rows):
        gen = sum(self.states[u].p_out_mw for u in self.order if self.states[u].online)
        load = sum(self.loads.values())
        dv = sum(self.states[u].p_out_mw for u in self.dvpp_ids if self.states[u].online)
        row = [self.t, self.freq.delta_f_hz, self.freq.rocof_hz_s]
        row += [self.states[u].p_out_mw for u in self.order]
        row += list(self._flows())
        row += [max(0.0, load - gen), dv, self.target_mw]
        rows.append(row)

    def run(self) -> SimTrace:
        cfg = self.cfg
        dt = cfg.dt_device_s
        r_freq, r_red, r_mkt = cfg.ratio(cfg.dt_freq_s), cfg.ratio(cfg.dt_redispatch_s), cfg.ratio(cfg.dt_market_s)
        r_sample = cfg.ratio(cfg.sample_period_s) if cfg.sample_period_s else 1
        profile = cfg.frequency_profile
        if profile is not None:
            self.freq = replace(self.freq, delta_w_pu=profile(0.0) / self.freq.f_nominal_hz)
        rows = []
        self._sample(rows)
        for k in range(cfg.n_ticks):
            self.t = t = k * dt
            while self._next_event < len(self.events) and self.events[self._next_event].time_s <= t + 1e-9:
                self._apply(self.events[self._next_event])
                self._next_event += 1
            if k % r_mkt == 0 and k > 0 and cfg.market_targets_mw:
                period = min(k // r_mkt, len(cfg.market_targets_mw) - 1)
                self.target_mw = float(cfg.market_targets_mw[period])
                self._pending_redispatch = True
            if cfg.redispatch and ((k % r_red == 0 and k > 0) or self._pending_redispatch):
                self._redispatch(t)
                self._pending_redispatch = False
            if k % r_freq == 0:
                if cfg.noise is not None and k > 0:
                    self._noise_step(cfg.dt_freq_s)
                self.broadcast = BroadcastSignal(self.freq.delta_f_hz, t)
                for c in self.controllers.values():
                    self._set_limits(c)
            bc = self.broadcast.read(t)
            log_ctrl = k % r_freq == 0
            for uid, c in self.controllers.items():
                y = c.step(bc)
                self.states[uid] = replace(self.states[uid], p_fs_mw=y * self.s_base)
                if log_ctrl:
                    self.ctrl_log.append({"time_s": t, "unit_id": uid, "dp_cmd_pu": y, "saturated": int(c.saturated)})
            gen = 0.0
            for uid in self.order:
                st = step_unit(self.states[uid], self.tech[uid], dt)
                self.states[uid] = st
                if st.online:
                    gen += st.p_out_mw
            if profile is not None:
                w0 = self.freq.delta_w_pu
                w1 = profile(t + dt) / self.freq.f_nominal_hz
                self.freq = replace(self.freq, delta_w_pu=w1, rocof_pu_s=(w1 - w0) / dt)
            else:
                load = sum(self.loads.values())
                try:
                    self.freq = step_frequency(self.freq, gen / self.s_base, load / self.s_base, dt)
                except DvppError as exc:
                    raise SimulationError(f"t={t:.2f} s: {exc}") from exc
            self.t = (k + 1) * dt
            if (k + 1) % r_sample == 0:
                self._sample(rows)
        names = ["time_s", "delta_f_hz", "rocof_hz_s"] + [f"p_{u}_mw" for u in self.order]
        names += [_line_col(self.base_net, j) for j in range(len(self.base_net.lines))]
        names += ["unserved_mw", "dvpp_p_mw", "dvpp_target_mw"]
        data = np.array(rows, dtype=float)
        cols = {n: data[:, j].copy() for j, n in enumerate(names)}
        meta = {"scenario": self.sc.kind, "h_sys_s": self.freq.h_sys_s, "spec": self.spec,
                "partition_error": partition_error(self.factors) if self.factors else 0.0}
        return SimTrace(cols, self.trace_events, self.dispatch_log, self.ctrl_log, meta)


def run(scenario: Scenario, spec: DvppSpec | None = None, events: Sequence[SimEvent] = (),
        config: SimConfig = SimConfig()) -> SimTrace:
    return Simulator(scenario, spec, events, config).run()


def snapshot_problem(scenario: Scenario, target_mw: float | None = None) -> DispatchProblem:
    """Redispatch problem for the scenario's static operating point."""
    sim = Simulator(scenario, config=SimConfig(duration_s=1.0, redispatch=False))
    if target_mw is not None:
        sim.target_mw = float(target_mw)
    return sim._problem()


# ---------------------------------------------------------------- metrics

@dataclass(frozen=True)
class Metrics:
    nadir_hz: float
    rocof_max_hz_s: float
    settling_time_s: float
    steady_state_dev_hz: float
    unserved_energy_mwh: float
    initial_rocof_hz_s: float = 0.0


def metrics(trace: SimTrace, event_time_s: float | None = None, tail_s: float = 1.0, band: float = 0.1) -> Metrics:
    """Frequency-quality figures over the window after the first event.

    nadir: largest |Δf|. Steady state: mean Δf over the last ``tail_s``.
    Settling: time from the event until Δf enters, and never again leaves, a
    band of ``band``·|Δf_ss| around the steady state.
    """
    if event_time_s is None:
        if not trace.events:
            raise NoDisturbance("trace has no disturbance marker")
        event_time_s = trace.events[0][0]
    t = trace.time_s
    df = trace.delta_f_hz
    rocof = trace["rocof_hz_s"]
    post = t >= event_time_s - 1e-9
    if not post.any():
        raise NoDisturbance("no samples after the disturbance")
    tp, dfp = t[post], df[post]
    tail = tp >= tp[-1] - tail_s
    ss = float(np.mean(dfp[tail]))
    nadir = float(np.max(np.abs(dfp)))
    tol = band * abs(ss)
    outside = np.flatnonzero(np.abs(dfp - ss) > tol)
    if outside.size == 0:
        settle = 0.0
    elif outside[-1] == dfp.size - 1:
        settle = math.nan
    else:
        settle = float(tp[outside[-1] + 1] - event_time_s)
    rp = rocof[post]
    after = np.flatnonzero(tp > event_time_s + 1e-9)
    initial = float(rp[after[0]]) if after.size else 0.0
    unserved = trace.columns.get("unserved_mw")
    energy = 0.0
    if unserved is not None and tp.size > 1:
        u = unserved[post]
        energy = float(np.sum(0.5 * (u[1:] + u[:-1]) * np.diff(tp)) / 3600.0)
    return Metrics(nadir, float(np.max(np.abs(rp))), settle, ss, energy, initial)
