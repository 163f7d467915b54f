import pytest

from dvpp.errors import ValidationError
from dvpp.scenario import (BUILTIN_KINDS, EXPECTED_BUSES, SimEvent, builtin_scenario, load_builtin, load_events,
                           loads_events, loads_scenario, resolve_scenario, validate_event)

MINIMAL = """\
[meta]
kind = "custom"
slack_bus = 1

[[buses]]
id = 1
load_mw = 5.0

[[buses]]
id = 2

[[lines]]
from_bus = 1
to_bus = 2
reactance_pu = 0.1
limit_mw = 50.0

[[units]]
id = "H"
tech = "HYD"
bus = 2
rating_mw = 20.0
"""


@pytest.mark.parametrize("kind", BUILTIN_KINDS)
def test_builtin_bus_counts(kind):
    topo = builtin_scenario(kind)
    assert len(topo.network.buses) == EXPECTED_BUSES[kind]
    levels = {b.voltage_level for b in topo.network.buses}
    assert (levels == {"transmission"}) == (kind == "TypeI")


def test_south_is_solar_heavy():
    sc = load_builtin("TypeII_South")
    solar = sum(u.rating_mw for u in sc.units if u.tech in ("PV", "ST"))
    wind = sum(u.rating_mw for u in sc.units if u.tech == "W")
    assert solar > wind


def test_minimal_scenario_and_defaults():
    sc = loads_scenario(MINIMAL)
    assert sc.kind == "custom"
    assert [u.id for u in sc.dvpp_units] == ["H"]
    assert sc.total_load_mw == 5.0
    assert sc.with_spec(droop_d=3.0).dvpp.droop_d == 3.0
    assert sc.to_dict()["units"][0]["id"] == "H"


@pytest.mark.parametrize("bad,needle,line", [
    (MINIMAL.replace('tech = "HYD"', 'tech = "FUSION"'), "unknown technology", 20),
    (MINIMAL.replace("bus = 2\nrating", "bus = 9\nrating"), "does not exist", 21),
    (MINIMAL.replace("reactance_pu = 0.1", "reactance_pu = 0.0"), "reactance", 12),
    (MINIMAL + "colour = 3\n", "unknown keys", 23),
])
def test_errors_name_file_and_line(bad, needle, line):
    with pytest.raises(ValidationError) as exc:
        loads_scenario(bad, "grid.toml")
    assert needle in str(exc.value)
    assert exc.value.source == "grid.toml" and exc.value.line == line


def test_syntax_error_has_line():
    with pytest.raises(ValidationError) as exc:
        loads_scenario(MINIMAL + "oops = = 1\n", "grid.toml")
    assert exc.value.line == 23


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        resolve_scenario(str(tmp_path / "nope.toml"))
    with pytest.raises(FileNotFoundError):
        load_events(tmp_path / "nope.toml")


def test_events_parse_and_validate():
    sc = load_builtin("TypeI")
    text = """
[[events]]
time_s = 20.0
kind = "load_step"
bus = 3
delta_mw = 5.0

[[events]]
time_s = 10.0
kind = "unit_trip"
unit = "PVX"
"""
    evs = loads_events(text, "ev.toml", sc, 60.0)
    assert [e.kind for e in evs] == ["unit_trip", "load_step"]
    bad = text.replace('kind = "unit_trip"', 'kind = "meteor"')
    with pytest.raises(ValidationError) as exc:
        loads_events(bad, "ev.toml", sc)
    assert "meteor" in str(exc.value) and exc.value.line == 10


@pytest.mark.parametrize("ev", [
    SimEvent(1.0, "unit_trip", {"unit": "NOPE"}),
    SimEvent(1.0, "unit_trip", {"unit": "PVX", "extra": 1}),
    SimEvent(1.0, "load_step", {"bus": 99, "delta_mw": 1.0}),
    SimEvent(1.0, "line_outage", {"line": 40}),
    SimEvent(1.0, "spec_change", {}),
    SimEvent(1.0, "availability_change", {"unit": "PV1", "availability_mw": -1.0}),
    SimEvent(100.0, "unit_trip", {"unit": "PVX"}),
])
def test_invalid_events(ev):
    with pytest.raises(ValidationError):
        validate_event(ev, load_builtin("TypeI"), 60.0)
