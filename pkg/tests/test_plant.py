import math

import numpy as np
import pytest

from safegrid.plant import (
    GridParams,
    PlantModel,
    PlantState,
    build_lc_plant,
    build_rl_plant,
    step_rk4,
    step_zoh,
    zoh_discretize,
)

DT = 50e-6


def rl_closed_form(v, r, l, t):
    return v / r * (1.0 - math.exp(-r * t / l))


def test_rl_matrices():
    m = build_rl_plant(20.0, 1e-3)
    assert np.allclose(m.a_matrix, -20000.0 * np.eye(3))
    assert np.allclose(m.b_matrix, 1000.0 * np.eye(3))
    assert m.state_labels == ("i_a", "i_b", "i_c")
    m0 = build_rl_plant(0.0, 1e-3)
    assert np.all(m0.a_matrix == 0.0)


@pytest.mark.parametrize("r,l", [((1, 1, 1), (0, 1, 1)), (1.0, -1e-3)])
def test_rl_rejects_bad_inductance(r, l):
    with pytest.raises(ValueError):
        build_rl_plant(r, l)


def test_rl_step_response_zoh_and_rk4():
    r, l, v = 20.0, 1e-3, 100.0
    m = build_rl_plant(r, l)
    d = zoh_discretize(m, DT)
    s_zoh = s_rk4 = PlantState.zeros(m)
    u = np.full(3, v)
    for n in range(1, 201):
        s_zoh = step_zoh(d, s_zoh, u)
        s_rk4 = step_rk4(m, s_rk4, u, DT, substeps=10)
        exact = rl_closed_form(v, r, l, n * DT)
        assert np.allclose(s_zoh.x, exact, rtol=1e-9, atol=0)
        assert np.allclose(s_rk4.x, exact, rtol=1e-6, atol=0)
    assert s_zoh.t == pytest.approx(200 * DT)


def test_lc_structure_and_dc_steady_state():
    p = GridParams()
    m = build_lc_plant(p)
    assert m.n_states == 9 and m.n_inputs == 3
    assert m.state_labels[:3] == ("i_f_a", "i_f_b", "i_f_c")
    v = 100.0
    # derivative vanishes at the DC operating point
    x = np.array([v / 20] * 3 + [v] * 3 + [v / 20] * 3)
    assert np.allclose(m.derivative(x, np.full(3, v)), 0.0, atol=1e-9)
    # with filter resistance the capacitor sees the divider
    pr = GridParams(r_filt=2.0)
    mr = build_lc_plant(pr)
    i = v / (2.0 + 20.0)
    xr = np.array([i] * 3 + [v * (1 - 2.0 / 22.0)] * 3 + [i] * 3)
    assert np.allclose(mr.derivative(xr, np.full(3, v)), 0.0, atol=1e-9)


def test_lc_zero_stays_zero():
    m = build_lc_plant(GridParams())
    d = zoh_discretize(m, DT)
    s = PlantState.zeros(m)
    for _ in range(10):
        s = step_zoh(d, s, np.zeros(3))
    assert np.all(s.x == 0.0)


@pytest.mark.parametrize("kw", [dict(l_filt=0.0), dict(c_filt=-1e-6), dict(l_load=0.0), dict(r_load=-1.0)])
def test_grid_params_validation(kw):
    with pytest.raises(ValueError):
        GridParams(**kw)


def test_lc_resonance_near_filter_frequency():
    p = GridParams()
    block = build_lc_plant(p).a_matrix[np.ix_([0, 3, 6], [0, 3, 6])]
    eig = np.linalg.eigvals(block)
    omega0 = 1.0 / math.sqrt(p.l_filt * p.c_filt)
    assert omega0 == pytest.approx(5000.0)
    osc = eig[np.abs(eig.imag) > 0]
    assert len(osc) == 2
    assert abs(osc[0].imag) == pytest.approx(omega0, rel=0.1)


def test_zoh_closed_forms():
    h = 1e-3
    d = zoh_discretize(PlantModel(np.zeros((2, 2)), np.eye(2), ("x", "y")), h)
    assert np.allclose(d.a_d, np.eye(2)) and np.allclose(d.b_d, h * np.eye(2))
    a, b = 3.0, 2.0
    d = zoh_discretize(PlantModel([[-a]], [[b]], ("x",)), h)
    assert d.a_d[0, 0] == pytest.approx(math.exp(-a * h), rel=1e-14)
    assert d.b_d[0, 0] == pytest.approx((1 - math.exp(-a * h)) / a * b, rel=1e-12)
    with pytest.raises(ValueError):
        zoh_discretize(PlantModel([[-a]], [[b]], ("x",)), 0.0)


def test_zoh_stable_with_load():
    d = zoh_discretize(build_lc_plant(GridParams()), DT)
    assert max(abs(np.linalg.eigvals(d.a_d))) < 1.0


@pytest.mark.parametrize("params", [GridParams(), GridParams(r_filt=0.3)])
def test_zoh_semigroup(params):
    m = build_lc_plant(params)
    full = zoh_discretize(m, DT).a_d
    half = zoh_discretize(m, DT / 2).a_d
    assert np.allclose(full, half @ half, rtol=0, atol=1e-10)


def test_zoh_superposition():
    d = zoh_discretize(build_lc_plant(GridParams()), DT)
    rng = np.random.default_rng(1)
    x1, x2 = rng.normal(size=(2, 9))
    u1, u2 = rng.normal(size=(2, 3))
    s = lambda x, u: step_zoh(d, PlantState(x), u).x
    assert np.allclose(s(x1 + x2, u1 + u2), s(x1, u1) + s(x2, u2) - s(np.zeros(9), np.zeros(3)))


def test_rk4_zero_dynamics_is_identity():
    m = PlantModel(np.zeros((3, 3)), np.zeros((3, 3)), ("a", "b", "c"))
    s = step_rk4(m, PlantState(np.array([1.0, 2.0, 3.0])), np.ones(3), DT, 5)
    assert np.array_equal(s.x, [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        step_rk4(m, s, np.ones(3), DT, 0)


def test_phase_decoupling():
    m = build_lc_plant(GridParams(r_filt=0.1))
    d = zoh_discretize(m, DT)
    s = s_rk = PlantState.zeros(m)
    for _ in range(50):
        s = step_zoh(d, s, [300.0, 0.0, 0.0])
        s_rk = step_rk4(m, s_rk, [300.0, 0.0, 0.0], DT, 4)
    for st in (s, s_rk):
        idx_bc = [k for k, lab in enumerate(m.state_labels) if not lab.endswith("_a")]
        assert np.all(st.x[idx_bc] == 0.0)
        assert st.x[0] != 0.0


def test_passive_decay():
    p = GridParams(r_filt=0.5)
    d = zoh_discretize(build_lc_plant(p), DT)
    s = PlantState(np.array([10.0, -3, 2, 50.0, 10, -20, -5.0, 1, 0]))
    energy_w = np.diag([p.l_filt] * 3 + [p.c_filt] * 3 + [p.l_load] * 3)
    norms, energy = [], []
    for _ in range(400):
        s = step_zoh(d, s, np.zeros(3))
        norms.append(np.linalg.norm(s.x))
        energy.append(0.5 * s.x @ energy_w @ s.x)
    windows = np.array(norms).reshape(-1, 20).mean(axis=1)
    assert np.all(np.diff(windows) < 0)
    assert np.all(np.diff(energy) <= 1e-15)
