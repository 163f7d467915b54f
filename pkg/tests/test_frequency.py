import pytest

from dvpp.errors import ZeroInertiaConfig
from dvpp.frequency import FreqModel, GridFormingFallback, online_inertia, step_frequency
from dvpp.units import TechSpec


def test_balanced_stays_at_zero():
    m = FreqModel(h_sys_s=5.0)
    for _ in range(1000):
        m = step_frequency(m, 1.0, 1.0, 0.01)
    assert m.delta_f_hz == 0.0


def test_pure_damping_steady_state():
    m = FreqModel(h_sys_s=1e-3, d_load=1.0)
    for _ in range(100):
        m = step_frequency(m, 0.95, 1.0, 0.01)
    assert m.delta_w_pu == pytest.approx(-0.05, rel=1e-9)
    assert m.delta_f_hz == pytest.approx(-2.5, rel=1e-9)


def test_initial_rocof():
    m = step_frequency(FreqModel(h_sys_s=5.0, d_load=1.0), 0.9, 1.0, 1e-4)
    assert m.rocof_pu_s == pytest.approx(-0.01, rel=1e-3)
    assert m.rocof_hz_s == pytest.approx(-0.5, rel=1e-3)


def test_undamped_is_linear_ramp():
    m = FreqModel(h_sys_s=5.0, d_load=0.0)
    for _ in range(100):
        m = step_frequency(m, 0.9, 1.0, 0.01)
    assert m.delta_w_pu == pytest.approx(-0.01, rel=1e-12)


def test_zero_inertia_requires_fallback():
    with pytest.raises(ZeroInertiaConfig):
        step_frequency(FreqModel(h_sys_s=0.0), 1.0, 1.0, 0.01)
    m = FreqModel(h_sys_s=0.0, d_load=1.0, fallback=GridFormingFallback(tau_s=0.1, droop_pu=19.0))
    for _ in range(200):
        m = step_frequency(m, 0.9, 1.0, 0.01)
    assert m.delta_w_pu == pytest.approx(-0.1 / 20.0, rel=1e-6)


def test_step_size_limit():
    with pytest.raises(ValueError):
        step_frequency(FreqModel(h_sys_s=5.0), 1.0, 1.0, 0.02)


def test_online_inertia():
    pv, hyd, cc = TechSpec.default("PV"), TechSpec.default("HYD", inertia_h_s=4.0), TechSpec.default("CC_TPS")
    assert online_inertia([(pv, True, 50.0)]) == 0.0
    assert online_inertia([(hyd, True, 100.0)]) == pytest.approx(4.0)
    mixed = [(hyd, True, 60.0), (cc, True, 50.0), (pv, True, 30.0), (cc, False, 80.0)]
    assert online_inertia(mixed) == pytest.approx((4.0 * 60 + 5.0 * 50) / 100)
