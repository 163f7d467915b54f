import math

import numpy as np
import pytest

from dvpp.engine import NoiseConfig, SimConfig, SimTrace, SimulationError, Simulator, metrics, run, snapshot_problem
from dvpp.errors import NoDisturbance, ValidationError
from dvpp.scenario import BUILTIN_KINDS, SimEvent, load_builtin, loads_scenario

PV_ONLY = """\
[meta]
slack_bus = 1
[[buses]]
id = 1
load_mw = 10.0
[[buses]]
id = 2
[[lines]]
from_bus = 1
to_bus = 2
reactance_pu = 0.1
limit_mw = 50.0
[[units]]
id = "PV1"
tech = "PV"
bus = 2
rating_mw = 30.0
availability_mw = 20.0
reserve_fraction = 0.2
[redispatch]
reserve_mw = 0.0
"""


@pytest.mark.parametrize("kind", BUILTIN_KINDS)
def test_balanced_start_stays_flat(kind):
    tr = run(load_builtin(kind), config=SimConfig(duration_s=5.0))
    assert np.all(tr.delta_f_hz == 0.0)
    for name, col in tr.columns.items():
        if name.startswith("p_"):
            assert np.all(col == col[0]), name
    assert tr.meta["partition_error"] < 1e-9


def test_generation_trip_steady_state():
    sc = load_builtin("TypeI")
    tr = run(sc, events=[SimEvent(5.0, "unit_trip", {"unit": "PVX"})], config=SimConfig(duration_s=40.0))
    m = metrics(tr)
    want = -0.1 / (sc.dvpp.droop_d + sc.frequency.d_load) * sc.frequency.f_nominal_hz
    assert m.steady_state_dev_hz == pytest.approx(want, rel=0.01)
    assert m.nadir_hz >= abs(m.steady_state_dev_hz)
    assert tr.events[0][0] == 5.0 and "PVX" in tr.events[0][1]
    assert tr["p_PVX_mw"][-1] == 0.0


def test_load_step_mirrors_trip():
    sc = load_builtin("TypeI")
    trip = run(sc, events=[SimEvent(1.0, "unit_trip", {"unit": "PVX"})], config=SimConfig(duration_s=20.0))
    load = run(sc, events=[SimEvent(1.0, "load_step", {"bus": 2, "delta_mw": 10.0})],
               config=SimConfig(duration_s=20.0))
    assert np.allclose(trip.delta_f_hz, load.delta_f_hz, atol=1e-9)


def test_identical_runs_are_identical_and_seed_matters():
    sc = load_builtin("TypeI")
    cfg = SimConfig(duration_s=10.0, seed=4, noise=NoiseConfig(sigma=0.05, theta_s=5.0))
    a, b = run(sc, config=cfg), run(sc, config=cfg)
    for name in a.columns:
        assert np.array_equal(a[name], b[name])
    c = run(sc, config=SimConfig(duration_s=10.0, seed=5, noise=NoiseConfig(sigma=0.05, theta_s=5.0)))
    assert not np.array_equal(a.delta_f_hz, c.delta_f_hz)


def test_availability_drop_triggers_redispatch():
    sc = load_builtin("TypeI")
    ev = [SimEvent(3.0, "availability_change", {"unit": "W1", "availability_mw": 20.0})]
    tr = run(sc, events=ev, config=SimConfig(duration_s=6.0))
    times = sorted({row["time_s"] for row in tr.dispatch})
    assert times[0] == 0.0 and any(abs(t - 3.0) < 1e-9 for t in times)
    after = [r for r in tr.dispatch if r["unit_id"] == "W1" and r["time_s"] >= 3.0]
    assert after and all(r["p_set_mw"] <= 20.0 * 0.8 + 1e-6 for r in after)
    # frequency service may release the held reserve, never more than availability
    assert np.all(tr["p_W1_mw"][tr.time_s > 3.0] <= 20.0 + 1e-9)


def test_line_outage_zeroes_flow_column():
    sc = load_builtin("TypeI")
    tr = run(sc, events=[SimEvent(2.0, "line_outage", {"line": 8})], config=SimConfig(duration_s=4.0))
    col = next(n for n in tr.columns if n.startswith("flow_8_"))
    assert tr[col][0] != 0.0 and tr[col][-1] == 0.0
    # flows still balance the injections after the outage
    assert np.all(tr.delta_f_hz == 0.0)


def test_islanding_outage_is_a_simulation_error():
    sc = loads_scenario(PV_ONLY.replace("[redispatch]", "[frequency]\ngrid_forming_tau_s = 0.1\n[redispatch]"))
    with pytest.raises(SimulationError):
        run(sc, events=[SimEvent(1.0, "line_outage", {"line": 0})], config=SimConfig(duration_s=2.0))


def test_zero_inertia_needs_fallback():
    sc = loads_scenario(PV_ONLY)
    with pytest.raises(SimulationError, match="inertia"):
        run(sc, events=[SimEvent(0.5, "load_step", {"bus": 1, "delta_mw": 1.0})], config=SimConfig(duration_s=1.0))
    sc = loads_scenario(PV_ONLY.replace("[redispatch]", "[frequency]\ngrid_forming_tau_s = 0.1\n[redispatch]"))
    tr = run(sc, events=[SimEvent(0.5, "load_step", {"bus": 1, "delta_mw": 1.0})], config=SimConfig(duration_s=5.0))
    assert tr.delta_f_hz[-1] < 0.0


def test_spec_change_is_applied():
    sc = load_builtin("TypeI")
    ev = [SimEvent(1.0, "spec_change", {"droop_d": 40.0}), SimEvent(2.0, "unit_trip", {"unit": "PVX"})]
    sim = Simulator(sc, None, ev, SimConfig(duration_s=30.0))
    tr = sim.run()
    assert sim.spec.droop_d == 40.0
    assert tr.delta_f_hz[-1] == pytest.approx(-0.1 / 41.0 * 50.0, rel=0.01)


def test_market_targets_change_dispatch():
    sc = load_builtin("TypeI")
    cfg = SimConfig(duration_s=25.0, dt_redispatch_s=1.0, dt_market_s=10.0, market_targets_mw=(80.0, 75.0, 70.0))
    tr = run(sc, config=cfg)
    target = tr["dvpp_target_mw"]
    assert target[0] == 80.0 and target[-1] == 70.0
    assert tr["dvpp_p_mw"][-1] < 80.0


def test_infeasible_initial_dispatch():
    sc = load_builtin("TypeI")
    with pytest.raises(SimulationError, match="initial dispatch"):
        run(sc, config=SimConfig(duration_s=1.0, market_targets_mw=(500.0,)))


def test_snapshot_problem_has_all_dvpp_units():
    pb = snapshot_problem(load_builtin("TypeI"))
    assert {u.id for u in pb.units} == {"HYD1", "PV1", "W1"}
    assert pb.target_mw == pytest.approx(80.0)


@pytest.mark.parametrize("kw", [dict(duration_s=0.0), dict(dt_freq_s=0.05), dict(sample_period_s=0.015),
                                dict(dt_device_s=-1.0)])
def test_invalid_config(kw):
    with pytest.raises(ValidationError):
        SimConfig(**kw)


def test_metrics_flat_trace():
    t = np.linspace(0, 10, 1001)
    m = metrics(SimTrace.from_series(t, np.zeros_like(t), event_time_s=0.0))
    assert (m.nadir_hz, m.steady_state_dev_hz, m.settling_time_s, m.rocof_max_hz_s) == (0.0, 0.0, 0.0, 0.0)


def test_metrics_synthetic_exponential():
    t = np.arange(0, 60.0 + 1e-9, 0.001)
    df = -0.5 * (1.0 - np.exp(-t / 2.0))
    m = metrics(SimTrace.from_series(t, df, event_time_s=0.0))
    assert m.steady_state_dev_hz == pytest.approx(-0.5, rel=1e-6)
    assert m.nadir_hz == pytest.approx(0.5, rel=1e-6)
    assert m.settling_time_s == pytest.approx(2.0 * math.log(10.0), abs=2e-3)
    assert m.rocof_max_hz_s == pytest.approx(0.25, rel=1e-3)


def test_metrics_requires_disturbance():
    t = np.linspace(0, 1, 11)
    with pytest.raises(NoDisturbance):
        metrics(SimTrace.from_series(t, np.zeros_like(t)))
