import math

import pytest

from dvpp.errors import ValidationError
from dvpp.units import (DISPATCH_CLASS, TABLE1, DispatchClass, TechSpec, UnitState, dispatch_bounds, headroom,
                        set_availability, step_unit, trip)


def run(state, spec, dt, n):
    for _ in range(n):
        state = step_unit(state, spec, dt)
    return state


def test_class_mapping_is_fixed():
    assert DISPATCH_CLASS["PV"] is DispatchClass.A_hard_limited
    assert DISPATCH_CLASS["W"] is DispatchClass.B_brief_overshoot
    assert DISPATCH_CLASS["ST"] is DispatchClass.C_storage_backed
    assert DISPATCH_CLASS["PS_HPP"] is DispatchClass.E_bidirectional
    for tech in ("BIO", "HYD", "CF_TPS", "CC_TPS", "N_TPS", "GEO"):
        assert DISPATCH_CLASS[tech] is DispatchClass.D_unconstrained_slow


@pytest.mark.parametrize("tech", sorted(TABLE1))
def test_defaults_lie_inside_table_ranges(tech):
    spec = TechSpec.default(tech)
    assert spec.within_table1()
    assert spec.tau_s == pytest.approx(spec.response_time_s / 3)
    assert spec.synchronous == (TABLE1[tech][2] == "SG")


def test_invalid_spec_rejected():
    with pytest.raises(ValidationError):
        TechSpec("XX", 1.0, 0.0, "PE")
    with pytest.raises(ValidationError):
        TechSpec("PV", 0.0, 0.0, "PE")
    with pytest.raises(ValidationError):
        UnitState(0, 0, -1, 10)


def test_fixed_point_is_unchanged():
    spec = TechSpec.default("HYD")
    s0 = UnitState(p_out_mw=30, p_cmd_mw=30, p_avail_mw=100, rating_mw=100)
    s1 = step_unit(s0, spec, 0.01)
    assert s1.p_out_mw == 30 and not s1.saturated


def test_lag_is_exact_exponential():
    spec = TechSpec.default("HYD")
    s = UnitState(p_out_mw=0, p_cmd_mw=10, p_avail_mw=100, rating_mw=100)
    s = run(s, spec, 0.5, 20)
    assert s.p_out_mw == pytest.approx(10 * (1 - math.exp(-10 / spec.tau_s)), rel=1e-12)


def test_pv_deloaded_clamp_and_saturation():
    spec = TechSpec.default("PV")
    s = UnitState(p_out_mw=0, p_cmd_mw=10, p_avail_mw=8, rating_mw=20, reserve_fraction=0.1)
    s = run(s, spec, 0.1, 200)
    assert s.p_out_mw == pytest.approx(7.2, abs=1e-9)
    assert s.saturated


def test_frequency_channel_releases_reserve():
    spec = TechSpec.default("PV")
    s = UnitState(p_out_mw=7.2, p_cmd_mw=7.2, p_avail_mw=8, rating_mw=20, reserve_fraction=0.1, p_fs_mw=0.8)
    s = run(s, spec, 0.1, 200)
    assert s.p_out_mw == pytest.approx(8.0, abs=1e-9)
    assert not s.saturated


def test_pv_availability_drop_caps_next_step():
    spec = TechSpec.default("PV")
    s = UnitState(p_out_mw=9, p_cmd_mw=9, p_avail_mw=10, rating_mw=20, reserve_fraction=0.1)
    s = step_unit(set_availability(s, 5.0), spec, 0.01)
    assert s.p_out_mw <= 5 * 0.9 + 1e-12


def test_class_d_ignores_availability():
    spec = TechSpec.default("HYD")
    a = UnitState(p_out_mw=10, p_cmd_mw=40, p_avail_mw=100, rating_mw=100)
    b = set_availability(a, 0.0)
    assert run(a, spec, 1.0, 50).p_out_mw == run(b, spec, 1.0, 50).p_out_mw


def test_wind_overshoot_budget_then_clamp():
    spec = TechSpec.default("W")
    s = UnitState(p_out_mw=10, p_cmd_mw=11, p_avail_mw=10, rating_mw=20, overload_budget_s=2.0,
                  overload_budget_max_s=2.0)
    s = run(s, spec, 0.01, 100)
    assert s.p_out_mw == pytest.approx(11.0, abs=1e-6)
    s = run(s, spec, 0.01, 150)
    assert s.overload_locked
    assert s.p_out_mw <= 10.0 + 1e-9
    assert s.saturated
    # clamp holds while the budget recovers, then overshoot is allowed again
    peak = 0.0
    for _ in range(140):
        s = step_unit(s, spec, 0.01)
        peak = max(peak, s.p_out_mw)
    assert peak <= 10.0 + 1e-9
    s = run(s, spec, 0.01, 100)
    assert not s.overload_locked and s.p_out_mw > 10.5


def test_storage_sustains_two_hours_then_stops():
    spec = TechSpec.default("ST")
    s = UnitState(p_out_mw=5, p_cmd_mw=5, p_avail_mw=0, rating_mw=10, energy_stored_mwh=10,
                  storage_capacity_mwh=10)
    dt = 10.0
    s = run(s, spec, dt, 719)
    assert s.p_out_mw == pytest.approx(5.0)
    assert s.energy_stored_mwh == pytest.approx(5.0 * dt / 3600, rel=1e-9)
    s = run(s, spec, dt, 2)
    assert s.energy_stored_mwh == 0.0
    s = step_unit(s, spec, dt)
    assert s.p_out_mw == 0.0


def test_headroom_examples():
    pv = TechSpec.default("PV")
    at_ceiling = UnitState(p_out_mw=10, p_cmd_mw=10, p_avail_mw=10, rating_mw=10)
    assert headroom(at_ceiling, pv).up_mw == 0.0
    deloaded = UnitState(p_out_mw=9, p_cmd_mw=9, p_avail_mw=10, rating_mw=20, reserve_fraction=0.1)
    assert headroom(deloaded, pv).up_mw == pytest.approx(1.0)
    ps = UnitState(p_out_mw=0, p_cmd_mw=0, p_avail_mw=20, rating_mw=20)
    h = headroom(ps, TechSpec.default("PS_HPP"))
    assert (h.up_mw, h.down_mw) == (20.0, 20.0)


def test_trip_and_bounds():
    spec = TechSpec.default("PV")
    s = UnitState(p_out_mw=9, p_cmd_mw=9, p_avail_mw=10, rating_mw=20, reserve_fraction=0.2)
    assert dispatch_bounds(s, spec) == pytest.approx((0.0, 8.0, 10.0))
    t = trip(s)
    assert not t.online and t.p_out_mw == 0.0
    assert step_unit(t, spec, 0.01).p_out_mw == 0.0
    assert headroom(t, spec).up_mw == 0.0
