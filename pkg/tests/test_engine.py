"""Engine algebra: desk-evaluation oracles, limits, properties."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from dieseltwin.constants import (
    AmbientConditions,
    EngineConstants,
    UnknownParams,
    field_params,
)
from dieseltwin.engine import (
    AlgebraicDivergence,
    EngineDomainError,
    ExhaustFlowSingularity,
    GroundTruthEmpiricals,
    compressor,
    cylinder_flow,
    cylinder_temperature,
    egr_flow,
    solve_algebraic_pair,
    state_derivatives,
    turbine,
)
from dieseltwin.engine.formulas import egr_valve_position

K = EngineConstants()
AMB = AmbientConditions()
GT = GroundTruthEmpiricals(K)
LAM = tuple(field_params().physical())


# -- cylinder flow -----------------------------------------------------------


def test_cylinder_flow_zero_fuel():
    W_ei, W_f, W_eo = cylinder_flow(1.5e5, 1400.0, 0.0, 0.9, K)
    assert W_f == 0.0
    assert W_eo == W_ei


def test_cylinder_flow_zero_speed():
    W_ei, W_f, W_eo = cylinder_flow(1.5e5, 0.0, 50.0, 0.9, K)
    assert W_ei == W_f == W_eo == 0.0


def test_fuel_flow_desk_value():
    # 1e-6/120 * 100 mg * 1500 rpm * 6 cylinders = 0.0075 kg/s
    _, W_f, _ = cylinder_flow(1.5e5, 1500.0, 100.0, 0.9, K)
    assert W_f == pytest.approx(0.0075, rel=1e-12)


def test_cylinder_flow_rejects_nonfinite():
    with pytest.raises(EngineDomainError):
        cylinder_flow(np.nan, 1400.0, 50.0, 0.9, K)


# -- cylinder temperature ----------------------------------------------------


def _flows(p_im=1.6e5, n_e=1400.0, u_delta=50.0):
    eta_vol = GT.eta_vol(p_im, n_e)
    return cylinder_flow(p_im, n_e, u_delta, eta_vol, K)


def test_manifold_temperature_limits():
    W_ei, W_f, _ = _flows()
    args = (1.6e5, 1.9e5, 0.03, 315.0, W_ei, W_f)
    *_, T_e_hi, T_em_hi = cylinder_temperature(*args, 1.0, 1e9, AMB.T_amb, K)
    assert T_em_hi == pytest.approx(AMB.T_amb, rel=1e-9)
    *_, T_e0, T_em0 = cylinder_temperature(*args, 1.0, 0.0, AMB.T_amb, K)
    assert T_em0 == pytest.approx(T_e0, rel=1e-12)


def test_manifold_temperature_zero_flow_singularity():
    with pytest.raises(ExhaustFlowSingularity):
        cylinder_temperature(1.6e5, 1.9e5, 0.03, 315.0, 0.0, 0.0, 1.0, 10.0, AMB.T_amb, K)


# -- EGR valve ---------------------------------------------------------------


def test_egr_psi_peak_at_optimal_ratio():
    p_em = 2.0e5
    p_im = K.Pi_egropt * p_em
    _, Psi, _, _ = egr_flow(p_im, p_em, 700.0, 1.2e-4, 0.5, K)
    assert Psi == pytest.approx(1.0, abs=1e-12)


def test_egr_backflow_blocked():
    Pi, Psi, _, W = egr_flow(2.2e5, 2.0e5, 700.0, 1.2e-4, 0.5, K)
    assert Pi == 1.0 and Psi == 0.0 and W == 0.0


def test_egr_flow_desk_evaluation():
    # Chain the valve equations by hand at a mid-range point.
    p_im, p_em, T_em, A_max, f = 1.5e5, 1.8e5, 700.0, 1.2e-4, 0.6
    ratio = p_im / p_em
    psi = 1.0 - ((1.0 - ratio) / (1.0 - K.Pi_egropt) - 1.0) ** 2
    expected = A_max * f * p_em * psi / math.sqrt(700.0 * K.R_e)
    _, _, A_egr, W = egr_flow(p_im, p_em, T_em, A_max, f, K)
    assert A_egr == pytest.approx(1.2e-4 * 0.6, rel=1e-15)
    assert W == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.021016, rel=1e-3)  # frozen desk value


@given(st.floats(min_value=0.0, max_value=5.0))
def test_egr_pressure_clamp_idempotent(x):
    clamped = min(max(x, K.Pi_egropt), 1.0)
    twice = min(max(clamped, K.Pi_egropt), 1.0)
    assert twice == clamped


# -- turbine -----------------------------------------------------------------


def test_turbine_no_pressure_ratio():
    p_em = AMB.p_amb  # Pi_t = 1
    Pi_t, W_t, _, P = turbine(p_em, 750.0, 5000.0, 1.1663e-4, GT.F_vgt_pit(60.0, 1.0), 0.7, AMB.p_amb, K)
    assert Pi_t == 1.0
    assert abs(W_t) < 1e-4  # f_pit at the ceiling clamp is ~4e-5
    assert P == 0.0


def test_f_pit_limits_and_monotonicity():
    assert GT.f_pit(0.0) == pytest.approx(1.0, rel=1e-12)
    xs = np.linspace(1e-4, 1.0 - 1e-4, 300)
    vals = GT.f_pit(xs)
    assert np.all(np.diff(vals) < 0.0)
    assert np.all((vals >= 0.0) & (vals <= 1.0))


def test_turbine_flow_desk_evaluation():
    p_em, T_em, omega, A = 2.0e5, 800.0, 5000.0, 1.1663e-4
    F = GT.F_vgt_pit(60.0, AMB.p_amb / p_em)
    _, W_t, _, _ = turbine(p_em, T_em, omega, A, F, 0.7, AMB.p_amb, K)
    # Hand evaluation of the flow equation.
    f_vgt = K.c_f2 + K.c_f1 * math.sqrt(1.0 - ((60.0 - K.c_vgt2) / K.c_vgt1) ** 2)
    f_pit = math.sqrt(1.0 - (AMB.p_amb / p_em) ** K.K_t)
    expected = A * p_em * f_vgt * f_pit / math.sqrt(T_em * K.R_e)
    assert W_t == pytest.approx(expected, rel=1e-12)


# -- compressor --------------------------------------------------------------


def test_compressor_zero_flow_coefficient():
    _, W_c, P_c = compressor(1.5e5, 5000.0, 0.6, 0.0, AMB, K)
    assert W_c == 0.0 and P_c == 0.0


def test_compressor_unity_pressure_ratio():
    _, _, P_c = compressor(AMB.p_amb, 5000.0, 0.6, 0.01, AMB, K)
    assert P_c == pytest.approx(0.0, abs=1e-12)


def test_compressor_power_desk_evaluation():
    p_im, omega, eta_c, phi = 1.8e5, 5200.0, 0.55, 0.012
    _, W_c, P_c = compressor(p_im, omega, eta_c, phi, AMB, K)
    W_expected = AMB.p_amb * math.pi * K.R_c**3 * omega * phi / (K.R_a * AMB.T_amb)
    Pi_c = p_im / AMB.p_amb
    P_expected = W_expected * K.c_pa * AMB.T_amb * (Pi_c ** (1 - 1 / K.gamma_a) - 1) / eta_c
    assert W_c == pytest.approx(W_expected, rel=1e-12)
    assert P_c == pytest.approx(P_expected, rel=1e-12)


def test_compressor_rejects_nonpositive_speed():
    with pytest.raises(EngineDomainError):
        compressor(1.5e5, 0.0, 0.6, 0.01, AMB, K)


# -- ground-truth empiricals -------------------------------------------------


def test_f_egr_plateau_branch():
    vertex = -K.c_egr2 / (2 * K.c_egr1)
    plateau = K.c_egr3 - K.c_egr2**2 / (4 * K.c_egr1)
    assert GT.f_egr(vertex + 5.0) == pytest.approx(plateau, rel=1e-12)
    assert GT.f_egr(vertex + 40.0) == pytest.approx(plateau, rel=1e-12)


def test_f_vgt_out_of_ellipse_clamps():
    u = K.c_vgt2 + K.c_vgt1 * 1.5  # outside the ellipse
    assert GT.f_vgt(u) == pytest.approx(K.c_f2, rel=1e-12)


def test_eta_c_max_at_optimum():
    Pi_c_opt = 1.0 + K.pi_copt ** (1.0 / K.c_pi)
    assert GT.eta_c(K.W_copt, Pi_c_opt) == pytest.approx(K.eta_cmax, rel=1e-12)


# -- algebraic pair ----------------------------------------------------------


def test_pair_residuals_at_fixed_point():
    x_r, T_1, T_e, x_p, x_v, q_in = solve_algebraic_pair(1.6e5, 1.9e5, 1400.0, 50.0, 1.0, K)
    # Both defining relations must close to the solver tolerance.
    r1 = T_1 - (x_r * T_e + (1 - x_r) * K.T_im)
    r2 = x_r - (1.9e5 / 1.6e5) ** (1 / K.gamma_a) * x_p ** (-1 / K.gamma_a) / (K.r_c * x_v)
    assert abs(r1) < 1e-9
    assert abs(r2) < 1e-10
    assert 0.0 <= x_r < 1.0 and T_1 > 0.0


def test_pair_warm_and_cold_starts_agree():
    point = (1.7e5, 2.1e5, 1600.0, 65.0, 0.95)
    cold = solve_algebraic_pair(*point, K)
    far = solve_algebraic_pair(*point, K, warm_start=(0.5, 800.0))
    assert far[0] == pytest.approx(cold[0], abs=1e-9)
    assert far[1] == pytest.approx(cold[1], abs=1e-9)


def test_pair_vanishing_residual_fraction_gives_intake_temperature():
    # Nearly zero exhaust-to-intake pressure ratio with zero fuel drives
    # x_r to zero; T_1 must collapse to T_im.
    x_r, T_1, *_ = solve_algebraic_pair(2.0e5, 1.0, 1400.0, 0.0, 1.0, K)
    assert x_r < 1e-4
    # T_1 - T_im = x_r (T_e - T_im), bounded by x_r * T_im here.
    assert T_1 == pytest.approx(K.T_im, abs=x_r * K.T_im)


def test_pair_rejects_bad_warm_start():
    with pytest.raises(EngineDomainError):
        solve_algebraic_pair(1.6e5, 1.9e5, 1400.0, 50.0, 1.0, K, warm_start=(1.5, 320.0))


# -- state derivatives -------------------------------------------------------

STATE = (1.6e5, 1.9e5, 4500.0, 45.0, 42.0, 60.0)
CTRL = (50.0, 47.0, 61.0, 1400.0)


def _resolved_pair(state=STATE, ctrl=CTRL):
    return solve_algebraic_pair(state[0], state[1], ctrl[3], ctrl[0], LAM[2], K)[:2]


def test_actuator_equilibrium_zero_derivative():
    x_r, T_1 = _resolved_pair()
    state = (1.6e5, 1.9e5, 4500.0, 47.0, 42.0, 60.0)  # u1 == delayed input
    d = state_derivatives(state, CTRL, x_r, T_1, LAM, AMB, K)
    assert d[3] == 0.0
    assert d[4] != 0.0


def test_mass_balance_constructed_equilibrium():
    # Bisect engine speed until W_ei exactly balances W_c + W_egr, then the
    # intake-pressure derivative must vanish.
    x_r, T_1 = _resolved_pair()

    def imbalance(n_e):
        ctrl = (CTRL[0], CTRL[1], CTRL[2], n_e)
        _, inter = state_derivatives(STATE, ctrl, x_r, T_1, LAM, AMB, K, full_output=True)
        return inter["W_c"] + inter["W_egr"] - inter["W_ei"]

    n_star = brentq(imbalance, 200.0, 4000.0, xtol=1e-12)
    d = state_derivatives(STATE, (CTRL[0], CTRL[1], CTRL[2], n_star), x_r, T_1, LAM, AMB, K)
    assert abs(d[0]) < 1e-4  # Pa/s, i.e. ~1e-9 of channel scale


def test_derivatives_pure_and_deterministic():
    x_r, T_1 = _resolved_pair()
    d1, i1 = state_derivatives(STATE, CTRL, x_r, T_1, LAM, AMB, K, full_output=True)
    d2, i2 = state_derivatives(STATE, CTRL, x_r, T_1, LAM, AMB, K, full_output=True)
    assert all(a == b for a, b in zip(d1, d2))
    assert all(np.array_equal(i1[k], i2[k]) for k in i1)


def test_egr_valve_position_overshoot():
    # Fast state above slow state during opening gives overshoot beyond both.
    u = egr_valve_position(50.0, 20.0, K)
    assert u > 50.0


# -- parameter masks ---------------------------------------------------------


@given(st.lists(st.floats(min_value=-10.0, max_value=6.0), min_size=4, max_size=4))
@settings(max_examples=200)
def test_mask_positivity(latents):
    p = UnknownParams(np.array(latents))
    assert np.all(p.normalized() > 0.0)
    assert np.all(p.physical() > 0.0)


def test_mask_roundtrip():
    values = (1.333, 1.1663, 0.9179, 1.0)
    p = UnknownParams.from_normalized(values)
    assert np.allclose(p.normalized(), values, rtol=1e-12)
    assert np.allclose(p.physical(), np.asarray(values) * np.array([1e-4, 1e-4, 1.0, 10.0]))
