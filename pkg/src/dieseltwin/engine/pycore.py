"""Pure-Python scalar kernel for trajectory integration.

This is the fallback twin of the compiled extension ``_core``: identical
algorithm, identical operation order, plain ``math`` scalars.  It exists so
the package works without a C toolchain; the compiled kernel is selected at
import time when available (see ``dieseltwin.engine.__init__``).

All algebra here mirrors ``dieseltwin.engine.formulas``; an equivalence
test pins the two paths together.
"""

from __future__ import annotations

import math

from ..constants import EngineConstants
from .formulas import OMEGA_MIN, PI_T_CEIL

# Row layout of the output matrix; must match _core.pyx.
CHANNELS = (
    "t",
    "p_im", "p_em", "omega_t", "u_egr1_t", "u_egr2_t", "u_vgt_t",
    "x_r", "T_1",
    "u_delta", "u_egr", "u_vgt", "n_e", "u_egr_del", "u_vgt_del",
    "u_egr_tilde",
    "eta_vol", "f_egr", "F_vgt_pit", "eta_tm", "eta_c", "Phi_c",
    "Pi_e", "Pi_egr", "Psi_egr", "Pi_t", "Pi_c", "BSR",
    "W_ei", "W_f", "W_eo", "W_egr", "W_t", "W_c",
    "q_in", "x_p", "x_v", "T_e", "T_em", "A_egr",
    "P_c", "P_t_eta_m",
    "dpim_dt", "dpem_dt", "domega_dt", "duegr1_dt", "duegr2_dt", "duvgt_dt",
)

STATUS_OK = 0
STATUS_ALGEBRAIC_DIVERGENCE = 1
STATUS_NONFINITE = 2


def _solve_pair(k: EngineConstants, Pi_e, W_f, W_eo, eta_sc, x_r, T_1):
    """Damped fixed point for (x_r, T_1); returns (ok, x_r, T_1, T_e, x_p, x_v, q_in)."""
    rc_g = k.r_c ** (k.gamma_a - 1.0)
    ga = k.gamma_a
    e1 = 1.0 - 1.0 / ga
    rc_f = k.r_c ** (1.0 - ga)
    cq = (1.0 - k.x_cv) / k.c_pa + k.x_cv / k.c_va
    pe1 = Pi_e**e1
    pei = Pi_e ** (1.0 / ga)
    q_in = x_p = x_v = T_e = 0.0
    for it in range(50):
        q_in = W_f * k.q_hv * (1.0 - x_r) / W_eo if W_eo > 0.0 else 0.0
        x_p = 1.0 + q_in * k.x_cv / (k.c_va * T_1 * rc_g)
        x_v = 1.0 + q_in * (1.0 - k.x_cv) / (
            k.c_pa * (q_in * k.x_cv / k.c_va + T_1 * rc_g)
        )
        T_e = eta_sc * pe1 * rc_f * x_p ** (1.0 / ga - 1.0) * (q_in * cq + T_1 * rc_g)
        x_r_new = pei * x_p ** (-1.0 / ga) / (k.r_c * x_v)
        T_1_new = x_r_new * T_e + (1.0 - x_r_new) * k.T_im
        dx = x_r_new - x_r
        dT = T_1_new - T_1
        x_r += 0.5 * dx
        T_1 += 0.5 * dT
        if abs(dx) < 1e-10 and abs(dT) < 1e-10:
            q_in = W_f * k.q_hv * (1.0 - x_r) / W_eo if W_eo > 0.0 else 0.0
            x_p = 1.0 + q_in * k.x_cv / (k.c_va * T_1 * rc_g)
            x_v = 1.0 + q_in * (1.0 - k.x_cv) / (
                k.c_pa * (q_in * k.x_cv / k.c_va + T_1 * rc_g)
            )
            T_e = (
                eta_sc * pe1 * rc_f * x_p ** (1.0 / ga - 1.0) * (q_in * cq + T_1 * rc_g)
            )
            return True, x_r, T_1, T_e, x_p, x_v, q_in
    return False, x_r, T_1, T_e, x_p, x_v, q_in


def _derivs(k: EngineConstants, lam, T_amb, p_amb, y, ud, ue, uv, ne, x_r, T_1, out):
    """Scalar state derivative; (x_r, T_1) are warm-start values, updated in place.

    ``out`` is a 48-slot list filled with [d0..d5, x_r, T_1, <inters...>];
    returns a status code.
    """
    A_egrmax, A_vgtmax, eta_sc, h_tot = lam
    p_im, p_em, w_t, u1, u2, uvt = y
    w_g = w_t if w_t > OMEGA_MIN else OMEGA_MIN

    eta_vol = k.c_vol1 * math.sqrt(p_im) + k.c_vol2 * math.sqrt(ne) + k.c_vol3
    W_ei = eta_vol * p_im * ne * k.V_d / (120.0 * k.R_a * k.T_im)
    W_f = 1e-6 / 120.0 * ud * ne * k.n_cyl
    W_eo = W_f + W_ei
    if W_eo <= 0.0:
        return STATUS_NONFINITE

    Pi_e = p_em / p_im
    ok, x_r, T_1, T_e, x_p, x_v, q_in = _solve_pair(
        k, Pi_e, W_f, W_eo, eta_sc, x_r, T_1
    )
    if not ok:
        return STATUS_ALGEBRAIC_DIVERGENCE
    T_em = T_amb + (T_e - T_amb) * math.exp(
        -h_tot * math.pi * k.d_pipe * k.l_pipe * k.n_pipe / (W_eo * k.c_pe)
    )

    u_egr_tilde = k.K_egr * u1 - (k.K_egr - 1.0) * u2
    vertex = -k.c_egr2 / (2.0 * k.c_egr1)
    if u_egr_tilde <= vertex:
        f_egr = k.c_egr1 * u_egr_tilde * u_egr_tilde + k.c_egr2 * u_egr_tilde + k.c_egr3
    else:
        f_egr = k.c_egr3 - k.c_egr2 * k.c_egr2 / (4.0 * k.c_egr1)
    if f_egr < 0.0:
        f_egr = 0.0
    ratio = p_im / p_em
    Pi_egr = k.Pi_egropt if ratio < k.Pi_egropt else (1.0 if ratio > 1.0 else ratio)
    u_psi = (1.0 - Pi_egr) / (1.0 - k.Pi_egropt) - 1.0
    Psi_egr = 1.0 - u_psi * u_psi
    A_egr = A_egrmax * f_egr
    W_egr = A_egr * p_em * Psi_egr / math.sqrt(T_em * k.R_e)

    Pi_t = p_amb / p_em
    pit = Pi_t if Pi_t < PI_T_CEIL else PI_T_CEIL
    arg = 1.0 - ((uvt - k.c_vgt2) / k.c_vgt1) ** 2
    f_vgt = k.c_f2 + k.c_f1 * math.sqrt(arg if arg > 0.0 else 0.0)
    f_pit = math.sqrt(1.0 - pit**k.K_t)
    F_vp = f_vgt * f_pit
    W_t = A_vgtmax * p_em * F_vp / math.sqrt(T_em * k.R_e)
    e_t = 1.0 - pit ** (1.0 - 1.0 / k.gamma_e)
    bsr = k.R_t * w_g / math.sqrt(2.0 * k.c_pe * T_em * e_t)
    dm = w_g - k.c_m2
    c_m = k.c_m1 * (dm if dm > 0.0 else 0.0) ** k.c_m3
    eta_tm = k.eta_tm_max - c_m * (bsr - k.BSR_opt) ** 2
    P_t_eta_m = 0.0 if Pi_t >= 1.0 else eta_tm * W_t * k.c_pe * T_em * e_t

    Pi_c = p_im / p_amb
    e_c = Pi_c ** (1.0 - 1.0 / k.gamma_a) - 1.0
    psi_c = 2.0 * k.c_pa * T_amb * e_c / (k.R_c * k.R_c * w_g * w_g)
    c_psi1 = k.c_wpsi1 * w_g * w_g + k.c_wpsi2 * w_g + k.c_wpsi3
    c_phi1 = k.c_wphi1 * w_g * w_g + k.c_wphi2 * w_g + k.c_wphi3
    arg = (1.0 - c_psi1 * (psi_c - k.c_psi2) ** 2) / c_phi1
    Phi_c = math.sqrt(arg if arg > 0.0 else 0.0) + k.c_phi2
    W_c = p_amb * math.pi * k.R_c**3 * w_g * Phi_c / (k.R_a * T_amb)
    dW = W_c - k.W_copt
    base = Pi_c - 1.0
    dp = (base if base > 0.0 else 0.0) ** k.c_pi - k.pi_copt
    eta_c = k.eta_cmax - (k.a1 * dW * dW + 2.0 * k.a3 * dW * dp + k.a2 * dp * dp)
    P_c = W_c * k.c_pa * T_amb * e_c / eta_c

    out[0] = k.R_a * k.T_im / k.V_im * (W_c + W_egr - W_ei)
    out[1] = k.R_e * T_em / k.V_em * (W_eo - W_t - W_egr)
    out[2] = (P_t_eta_m - P_c) / (k.J_t * w_g)
    out[3] = (ue - u1) / k.tau_egr1
    out[4] = (ue - u2) / k.tau_egr2
    out[5] = (uv - uvt) / k.tau_vgt
    out[6] = x_r
    out[7] = T_1
    out[8:] = (
        u_egr_tilde, eta_vol, f_egr, F_vp, eta_tm, eta_c, Phi_c,
        Pi_e, Pi_egr, Psi_egr, Pi_t, Pi_c, bsr,
        W_ei, W_f, W_eo, W_egr, W_t, W_c,
        q_in, x_p, x_v, T_e, T_em, A_egr, P_c, P_t_eta_m,
    )
    return STATUS_OK


def integrate_loop(
    k: EngineConstants,
    lam,
    T_amb,
    p_amb,
    ctrl_half,
    raw_ctrl,
    y0,
    x_r0,
    T_10,
    dt,
    n_steps,
    stride,
    out,
):
    """Fixed-step RK4 over ``n_steps`` with outputs every ``stride`` steps.

    ``ctrl_half``: (4, 2*n_steps+1) delayed controls on the half-step grid
    in order (u_delta, u_egr_del, u_vgt_del, n_e).  ``raw_ctrl``: (2,
    2*n_steps+1) undelayed (u_egr, u_vgt) for provenance columns.  ``out``
    must be (n_steps // stride + 1, len(CHANNELS)).  Returns (status,
    step_index).
    """
    y = [float(v) for v in y0]
    x_r, T_1 = float(x_r0), float(T_10)
    scratch = [0.0] * 35
    k1 = [0.0] * 6
    k2 = [0.0] * 6
    k3 = [0.0] * 6
    k4 = [0.0] * 6
    yt = [0.0] * 6
    ud, ue, uv, ne = ctrl_half
    rue, ruv = raw_ctrl
    row = 0
    for i in range(n_steps + 1):
        c0 = 2 * i
        if i % stride == 0:
            st = _derivs(
                k, lam, T_amb, p_amb, y, ud[c0], ue[c0], uv[c0], ne[c0], x_r, T_1, scratch
            )
            if st != STATUS_OK:
                return st, i
            x_r, T_1 = scratch[6], scratch[7]
            r = out[row]
            r[0] = i * dt
            r[1:7] = y
            r[7] = x_r
            r[8] = T_1
            r[9] = ud[c0]
            r[10] = rue[c0]
            r[11] = ruv[c0]
            r[12] = ne[c0]
            r[13] = ue[c0]
            r[14] = uv[c0]
            r[15:42] = scratch[8:]
            r[42:48] = scratch[0:6]
            row += 1
        if i == n_steps:
            break

        st = _derivs(k, lam, T_amb, p_amb, y, ud[c0], ue[c0], uv[c0], ne[c0], x_r, T_1, scratch)
        if st != STATUS_OK:
            return st, i
        x_r, T_1 = scratch[6], scratch[7]
        k1[:] = scratch[0:6]
        for j in range(6):
            yt[j] = y[j] + 0.5 * dt * k1[j]
        st = _derivs(k, lam, T_amb, p_amb, yt, ud[c0 + 1], ue[c0 + 1], uv[c0 + 1], ne[c0 + 1], x_r, T_1, scratch)
        if st != STATUS_OK:
            return st, i
        k2[:] = scratch[0:6]
        for j in range(6):
            yt[j] = y[j] + 0.5 * dt * k2[j]
        st = _derivs(k, lam, T_amb, p_amb, yt, ud[c0 + 1], ue[c0 + 1], uv[c0 + 1], ne[c0 + 1], x_r, T_1, scratch)
        if st != STATUS_OK:
            return st, i
        k3[:] = scratch[0:6]
        for j in range(6):
            yt[j] = y[j] + dt * k3[j]
        st = _derivs(k, lam, T_amb, p_amb, yt, ud[c0 + 2], ue[c0 + 2], uv[c0 + 2], ne[c0 + 2], x_r, T_1, scratch)
        if st != STATUS_OK:
            return st, i
        k4[:] = scratch[0:6]
        ok = True
        for j in range(6):
            y[j] = y[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            ok = ok and math.isfinite(y[j])
        if not ok:
            return STATUS_NONFINITE, i
    return STATUS_OK, n_steps
