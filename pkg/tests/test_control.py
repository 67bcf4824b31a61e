import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from safegrid.control import PiGains, PiState, pi_reset, pi_step

DT = 50e-6


def test_reset():
    s = PiState((1.0, -2.0, 3.0))
    assert pi_reset(s).integrators == (0.0, 0.0, 0.0)
    assert pi_reset(pi_reset(s)) == pi_reset(s)
    out, _ = pi_step(PiGains(0.5, 100.0), pi_reset(s), (0, 0, 0), (0, 0, 0), 0.3, DT, 1000.0)
    assert out.m_abc == (0.0, 0.0, 0.0)


def test_unit_plumbing():
    out, s = pi_step(PiGains(1.0, 0.0), PiState(), (0, 0, 0), (1, 0, 0), 0.0, DT, 2.0)
    assert np.allclose(out.v_cmd_dq0, (1.0, 0.0, 0.0))
    assert np.allclose(out.m_abc, (1.0, -0.5, -0.5))
    # per-unit scaling reads the PI output as the modulation index itself
    out_pu, _ = pi_step(PiGains(1.0, 0.0), PiState(), (0, 0, 0), (1, 0, 0), 0.0, DT, 1000.0, "per-unit")
    assert np.allclose(out_pu.m_abc, (1.0, -0.5, -0.5))
    out_full, _ = pi_step(PiGains(1.0, 0.0), PiState(), (0, 0, 0), (1, 0, 0), 0.0, DT, 2.0, "full-link")
    assert np.allclose(out_full.m_abc, (0.5, -0.25, -0.25))


def test_blackstart_first_step():
    out, s = pi_step(PiGains(0.005, 10.0), PiState(), (0, 0, 0), (15, 0, 0), 0.0, DT, 1000.0)
    assert out.v_cmd_dq0.d == pytest.approx(0.005 * 15 + 10 * 15 * 50e-6, rel=1e-12)
    assert out.v_cmd_dq0.d == pytest.approx(0.0825)
    assert s.integrators == pytest.approx((15 * DT, 0.0, 0.0))


def test_invalid_scaling_and_gains():
    with pytest.raises(ValueError):
        pi_step(PiGains(1, 1), PiState(), (0, 0, 0), (1, 0, 0), 0.0, DT, 2.0, "quarter")
    with pytest.raises(ValueError):
        PiGains(-1.0, 0.0)


gains = st.builds(PiGains, st.floats(0, 10), st.floats(0, 1e4))
currents = st.tuples(*[st.floats(-50, 50)] * 3)


@given(gains, currents, currents, st.floats(-10, 10), st.sampled_from(["per-unit", "half-link", "full-link"]), st.booleans())
def test_modulation_saturated(g, i_meas, i_ref, theta, scaling, aw):
    out, _ = pi_step(g, PiState((0.3, -0.2, 0.1)), i_meas, i_ref, theta, DT, 1000.0, scaling, aw)
    assert all(-1.0 <= m <= 1.0 for m in out.m_abc)


def test_proportional_only_has_no_drift():
    g = PiGains(0.01, 0.0)
    s = PiState()
    outs = []
    for _ in range(5):
        out, s = pi_step(g, s, (1.0, 2.0, -3.0), (15, 0, 0), 0.7, DT, 1000.0)
        outs.append(out)
    assert all(o == outs[0] for o in outs)


@given(st.floats(0.001, 1.0), st.floats(0.0, 100.0), st.tuples(*[st.floats(-5, 5)] * 3))
def test_homogeneity(kp, ki, err):
    s0 = PiState((1e-4, -2e-4, 0.0))
    a, _ = pi_step(PiGains(kp, ki), PiState(tuple(2 * v for v in s0.integrators)), (0, 0, 0), err, 0.0, DT, 1e6)
    b, _ = pi_step(PiGains(2 * kp, 2 * ki), s0, (0, 0, 0), tuple(v / 2 for v in err), 0.0, DT, 1e6)
    assert np.allclose(a.v_cmd_dq0, b.v_cmd_dq0, rtol=1e-12, atol=1e-15)


def test_integrators_hold_at_setpoint():
    theta = 0.4
    from safegrid.frames import inverse_park

    i_abc = inverse_park((15.0, 0.0, 0.0), theta)
    s = PiState((0.01, 0.002, 0.0))
    _, s2 = pi_step(PiGains(0.005, 10.0), s, i_abc, (15, 0, 0), theta, DT, 1000.0)
    assert np.allclose(s2.integrators, s.integrators, atol=1e-15)


def test_anti_windup_holds_integrator_when_saturated():
    s = PiState()
    _, s_free = pi_step(PiGains(1.0, 1e3), s, (0, 0, 0), (15, 0, 0), 0.0, DT, 1000.0, "per-unit")
    _, s_aw = pi_step(PiGains(1.0, 1e3), s, (0, 0, 0), (15, 0, 0), 0.0, DT, 1000.0, "per-unit", anti_windup=True)
    assert s_free.integrators[0] > 0
    assert s_aw.integrators == s.integrators
