"""Scenario files: network, units, DVPP spec and operating defaults.

Scenarios are TOML documents with ``[meta]``, ``[[buses]]``, ``[[lines]]``,
``[[units]]`` and optional ``[dvpp]``, ``[frequency]`` and ``[redispatch]``
tables. Keys carry their unit as a suffix (``_mw``, ``_pu``, ``_s``).
Validation errors name the file and the line of the offending entry.
"""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .coordination import DvppSpec
from .errors import DvppError, ValidationError
from .network import Bus, Line, Network, non_islanding_lines
from .units import TECHS, TechSpec, UnitState

BUILTIN_KINDS = ("TypeI", "TypeII_South", "TypeII_North", "TypeIII")
EXPECTED_BUSES = {"TypeI": 7, "TypeII_South": 13, "TypeII_North": 13, "TypeIII": 11}


@dataclass(frozen=True)
class UnitConfig:
    id: str
    tech: str
    bus: int
    rating_mw: float
    p_set_mw: float = 0.0
    availability_mw: float | None = None
    reserve_fraction: float = 0.0
    storage_mwh: float = 0.0
    cost_per_mwh: float = 0.0
    dvpp: bool = True
    inertia_h_s: float | None = None
    response_time_s: float | None = None
    p_min_mw: float | None = None

    @property
    def availability(self):
        return self.rating_mw if self.availability_mw is None else self.availability_mw

    def tech_spec(self) -> TechSpec:
        overrides = {}
        if self.inertia_h_s is not None:
            overrides["inertia_h_s"] = self.inertia_h_s
        if self.response_time_s is not None:
            overrides["response_time_s"] = self.response_time_s
        return TechSpec.default(self.tech, **overrides)

    def initial_state(self, p_out_mw: float | None = None) -> UnitState:
        p = self.p_set_mw if p_out_mw is None else p_out_mw
        return UnitState(p_out_mw=p, p_cmd_mw=p, p_avail_mw=self.availability, rating_mw=self.rating_mw,
                         energy_stored_mwh=self.storage_mwh, storage_capacity_mwh=self.storage_mwh,
                         reserve_fraction=self.reserve_fraction)


@dataclass(frozen=True)
class FrequencyConfig:
    d_load: float = 1.0
    f_nominal_hz: float = 50.0
    grid_forming_tau_s: float | None = None
    grid_forming_droop_pu: float = 20.0


@dataclass(frozen=True)
class RedispatchConfig:
    reserve_mw: float | None = None  # None: size to the largest DVPP unit output
    line_contingencies: str | tuple[int, ...] = "auto"
    unit_contingencies: bool = False
    trigger_fraction: float = 0.05


@dataclass(frozen=True)
class ScenarioTopology:
    kind: str
    network: Network
    placements: dict[str, int]


@dataclass(frozen=True)
class Scenario:
    kind: str
    network: Network
    units: tuple[UnitConfig, ...]
    dvpp: DvppSpec
    frequency: FrequencyConfig = FrequencyConfig()
    redispatch: RedispatchConfig = RedispatchConfig()
    source: str = "<memory>"

    @property
    def topology(self) -> ScenarioTopology:
        return ScenarioTopology(self.kind, self.network, {u.id: u.bus for u in self.units})

    @property
    def dvpp_units(self):
        return [u for u in self.units if u.dvpp]

    @property
    def other_units(self):
        return [u for u in self.units if not u.dvpp]

    def unit(self, uid: str) -> UnitConfig:
        for u in self.units:
            if u.id == uid:
                return u
        raise KeyError(uid)

    @property
    def total_load_mw(self):
        return sum(b.load_mw for b in self.network.buses)

    @property
    def dvpp_rating_mw(self):
        return sum(u.rating_mw for u in self.dvpp_units)

    def line_contingency_list(self) -> tuple[int, ...]:
        lc = self.redispatch.line_contingencies
        if lc == "auto":
            return tuple(non_islanding_lines(self.network))
        if lc == "none":
            return ()
        return tuple(lc)

    def with_spec(self, **changes) -> "Scenario":
        return replace(self, dvpp=replace(self.dvpp, **changes))

    def to_dict(self) -> dict[str, Any]:
        net = self.network
        return {
            "meta": {"kind": self.kind, "s_base_mva": net.s_base_mva, "slack_bus": net.slack_bus,
                     "source": self.source},
            "buses": [asdict(b) for b in net.buses],
            "lines": [{"from_bus": l.from_bus, "to_bus": l.to_bus, "reactance_pu": l.reactance_pu,
                       "limit_mw": l.flow_limit_mw} for l in net.lines],
            "units": [{k: v for k, v in asdict(u).items() if v is not None} for u in self.units],
            "dvpp": {k: v for k, v in asdict(self.dvpp).items() if v is not None},
            "frequency": {k: v for k, v in asdict(self.frequency).items() if v is not None},
            "redispatch": {k: (list(v) if isinstance(v, tuple) else v)
                           for k, v in asdict(self.redispatch).items() if v is not None},
        }


class _Locator:
    """Maps table entries back to source line numbers."""

    def __init__(self, text: str):
        self.lines = text.splitlines()

    def array_entry(self, name: str, index: int) -> int | None:
        pattern = re.compile(rf"^\s*\[\[\s*{re.escape(name)}\s*\]\]")
        hits = [k + 1 for k, line in enumerate(self.lines) if pattern.match(line)]
        return hits[index] if index < len(hits) else None

    def table(self, name: str) -> int | None:
        pattern = re.compile(rf"^\s*\[\s*{re.escape(name)}\s*\]")
        for k, line in enumerate(self.lines):
            if pattern.match(line):
                return k + 1
        return None

    def key_after(self, start: int | None, key: str) -> int | None:
        if start is None:
            return None
        pattern = re.compile(rf"^\s*{re.escape(key)}\s*=")
        for k in range(start, len(self.lines)):
            if self.lines[k].lstrip().startswith("["):
                break
            if pattern.match(self.lines[k]):
                return k + 1
        return start


def parse_toml(text: str, source: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ValidationError(str(exc), source, int(m.group(1)) if m else None) from None


_UNIT_KEYS = {f for f in UnitConfig.__dataclass_fields__}


def _build(doc: dict, source: str, loc: _Locator) -> Scenario:
    meta = doc.get("meta", {})
    kind = meta.get("kind", "custom")

    def fail(msg, line):
        raise ValidationError(msg, source, line)

    buses = []
    for k, raw in enumerate(doc.get("buses", [])):
        line = loc.array_entry("buses", k)
        try:
            buses.append(Bus(int(raw["id"]), raw.get("voltage_level", "transmission"), float(raw.get("load_mw", 0.0))))
        except KeyError as exc:
            fail(f"bus entry missing key {exc}", line)
        except (DvppError, TypeError, ValueError) as exc:
            fail(str(exc), line)
    if not buses:
        fail("scenario defines no buses", loc.table("meta"))
    lines = []
    for k, raw in enumerate(doc.get("lines", [])):
        line = loc.array_entry("lines", k)
        try:
            lines.append(Line(int(raw["from_bus"]), int(raw["to_bus"]), float(raw["reactance_pu"]),
                              float(raw["limit_mw"]), raw.get("name", "")))
        except KeyError as exc:
            fail(f"line entry missing key {exc}", line)
        except (DvppError, TypeError, ValueError) as exc:
            fail(str(exc), line)
    try:
        net = Network(buses, lines, int(meta.get("slack_bus", buses[0].id)), float(meta.get("s_base_mva", 100.0)))
        net.check_connected()
    except DvppError as exc:
        fail(str(exc), loc.table("meta"))

    units = []
    bus_ids = set(net.bus_ids)
    for k, raw in enumerate(doc.get("units", [])):
        line = loc.array_entry("units", k)
        unknown = set(raw) - _UNIT_KEYS
        if unknown:
            fail(f"unit entry has unknown keys {sorted(unknown)}", loc.key_after(line, sorted(unknown)[0]))
        for req in ("id", "tech", "bus", "rating_mw"):
            if req not in raw:
                fail(f"unit entry missing key '{req}'", line)
        if raw["tech"] not in TECHS:
            fail(f"unit {raw['id']}: unknown technology {raw['tech']!r}", loc.key_after(line, "tech"))
        if raw["bus"] not in bus_ids:
            fail(f"unit {raw['id']}: bus {raw['bus']} does not exist", loc.key_after(line, "bus"))
        try:
            u = UnitConfig(**raw)
            if u.rating_mw <= 0:
                raise ValidationError("rating_mw must be > 0")
            u.tech_spec()
            u.initial_state()
        except (DvppError, TypeError, ValueError) as exc:
            fail(f"unit {raw['id']}: {exc}", line)
        units.append(u)
    ids = [u.id for u in units]
    if len(set(ids)) != len(ids):
        fail("unit ids must be unique", loc.array_entry("units", 0))
    if not any(u.dvpp for u in units):
        fail("scenario has no DVPP units", loc.array_entry("units", 0))

    dv = doc.get("dvpp", {})
    try:
        spec = DvppSpec(float(dv.get("droop_d", 20.0)), float(dv.get("inertia_h", 5.0)),
                        float(dv.get("filter_tau_s", 0.5)),
                        None if dv.get("split_tau_s") is None else float(dv["split_tau_s"]))
    except (DvppError, TypeError, ValueError) as exc:
        fail(str(exc), loc.table("dvpp"))
    try:
        freq = FrequencyConfig(**doc.get("frequency", {}))
        red_raw = dict(doc.get("redispatch", {}))
        if isinstance(red_raw.get("line_contingencies"), list):
            red_raw["line_contingencies"] = tuple(int(x) for x in red_raw["line_contingencies"])
        red = RedispatchConfig(**red_raw)
    except TypeError as exc:
        fail(str(exc), loc.table("frequency") or loc.table("redispatch"))
    lc = red.line_contingencies
    if isinstance(lc, str) and lc not in ("auto", "none"):
        fail(f"line_contingencies must be 'auto', 'none' or a list, got {lc!r}", loc.table("redispatch"))
    if isinstance(lc, tuple) and any(not 0 <= k < len(net.lines) for k in lc):
        fail("line_contingencies references an unknown line index", loc.table("redispatch"))
    return Scenario(kind, net, tuple(units), spec, freq, red, source)


def loads_scenario(text: str, source: str = "<string>") -> Scenario:
    return _build(parse_toml(text, source), source, _Locator(text))


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    return loads_scenario(path.read_text(), str(path))


def builtin_path(kind: str):
    if kind not in BUILTIN_KINDS:
        raise ValidationError(f"unknown scenario kind {kind!r}; choose from {', '.join(BUILTIN_KINDS)}")
    return resources.files("dvpp") / "scenarios" / f"{kind}.toml"


def load_builtin(kind: str) -> Scenario:
    ref = builtin_path(kind)
    return loads_scenario(ref.read_text(), f"{kind}.toml")


def builtin_scenario(kind: str) -> ScenarioTopology:
    return load_builtin(kind).topology


def resolve_scenario(name_or_path: str) -> Scenario:
    """Accept a builtin kind or a file path."""
    if name_or_path in BUILTIN_KINDS:
        return load_builtin(name_or_path)
    return load_scenario(name_or_path)


# ---------------------------------------------------------------- events

EVENT_KINDS = ("unit_trip", "availability_change", "load_step", "line_outage", "spec_change")
_PAYLOAD = {
    "unit_trip": {"unit"},
    "availability_change": {"unit", "availability_mw"},
    "load_step": {"bus", "delta_mw"},
    "line_outage": {"line"},
    "spec_change": {"droop_d", "inertia_h", "filter_tau_s"},
}


@dataclass(frozen=True)
class SimEvent:
    time_s: float
    kind: str
    payload: dict = field(default_factory=dict)

    def describe(self):
        items = ", ".join(f"{k}={v}" for k, v in sorted(self.payload.items()))
        return f"{self.kind}@{self.time_s:g}s({items})"


def validate_event(ev: SimEvent, scenario: Scenario | None = None, duration_s: float | None = None):
    if ev.kind not in EVENT_KINDS:
        raise ValidationError(f"unknown event kind {ev.kind!r} in {ev.describe()}")
    allowed = _PAYLOAD[ev.kind]
    keys = set(ev.payload)
    if ev.kind == "spec_change":
        if not keys or not keys <= allowed:
            raise ValidationError(f"spec_change payload must use {sorted(allowed)}: {ev.describe()}")
    elif keys != allowed:
        raise ValidationError(f"{ev.kind} payload must be exactly {sorted(allowed)}: {ev.describe()}")
    if ev.time_s < 0 or (duration_s is not None and ev.time_s > duration_s):
        raise ValidationError(f"event time outside the run: {ev.describe()}")
    if scenario is None:
        return
    if "unit" in keys:
        ids = {u.id for u in scenario.units}
        if ev.payload["unit"] not in ids:
            raise ValidationError(f"unknown unit in {ev.describe()}")
    if ev.kind == "load_step" and ev.payload["bus"] not in scenario.network.bus_ids:
        raise ValidationError(f"unknown bus in {ev.describe()}")
    if ev.kind == "line_outage" and not 0 <= int(ev.payload["line"]) < len(scenario.network.lines):
        raise ValidationError(f"unknown line in {ev.describe()}")
    if ev.kind == "availability_change" and ev.payload["availability_mw"] < 0:
        raise ValidationError(f"negative availability in {ev.describe()}")


def loads_events(text: str, source: str = "<string>", scenario: Scenario | None = None,
                 duration_s: float | None = None) -> list[SimEvent]:
    """Parse ``[[events]]`` entries (time_s, kind, remaining keys form the payload)."""
    doc = parse_toml(text, source)
    loc = _Locator(text)
    out = []
    for k, raw in enumerate(doc.get("events", [])):
        line = loc.array_entry("events", k)
        raw = dict(raw)
        try:
            ev = SimEvent(float(raw.pop("time_s")), str(raw.pop("kind")), raw)
        except KeyError as exc:
            raise ValidationError(f"event entry missing key {exc}", source, line) from None
        try:
            validate_event(ev, scenario, duration_s)
        except ValidationError as exc:
            raise ValidationError(str(exc), source, loc.key_after(line, "kind") if "kind" in str(exc) else line) from None
        out.append(ev)
    return sorted(out, key=lambda e: e.time_s)


def load_events(path: str | Path, scenario: Scenario | None = None, duration_s: float | None = None):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    return loads_events(path.read_text(), str(path), scenario, duration_s)
