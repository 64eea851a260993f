# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled scalar kernel for trajectory integration.

Hand-ported twin of ``dieseltwin.engine.pycore`` with identical algorithm
and operation order.  Constants arrive packed by
``EngineConstants.pack()``; the enum below pins the layout.
"""

from libc.math cimport exp, sqrt, pow, isfinite, M_PI

STATUS_OK = 0
STATUS_ALGEBRAIC_DIVERGENCE = 1
STATUS_NONFINITE = 2

cdef enum:
    ST_OK = 0
    ST_DIV = 1
    ST_NAN = 2

DEF OMEGA_MIN = 1.0
DEF PI_T_CEIL = 1.0 - 1e-9

cdef enum:
    I_R_A, I_R_E, I_C_PA, I_C_VA, I_C_PE, I_GAMMA_A, I_GAMMA_E, I_V_IM, \
    I_V_EM, I_V_D, I_T_IM, I_RCOMP, I_N_CYL, I_Q_HV, I_X_CV, I_J_T, I_R_T, \
    I_RADC, I_D_PIPE, I_L_PIPE, I_N_PIPE, I_TAU_EGR1, I_TAU_EGR2, I_TAU_VGT, \
    I_TAU_DEGR, I_TAU_DVGT, I_K_EGR, I_PI_EGROPT, I_C_EGR1, I_C_EGR2, \
    I_C_EGR3, I_K_T, I_C_F1, I_C_F2, I_C_VGT1, I_C_VGT2, I_ETA_TM_MAX, \
    I_BSR_OPT, I_C_M1, I_C_M2, I_C_M3, I_C_VOL1, I_C_VOL2, I_C_VOL3, \
    I_ETA_CMAX, I_W_COPT, I_PI_COPT, I_C_PI, I_A1, I_A2, I_A3, I_C_WPSI1, \
    I_C_WPSI2, I_C_WPSI3, I_C_WPHI1, I_C_WPHI2, I_C_WPHI3, I_C_PSI2, \
    I_C_PHI2, N_CONSTS


cdef int _solve_pair(const double* k, double Pi_e, double W_f, double W_eo,
                     double eta_sc, double* x_r, double* T_1, double* T_e,
                     double* x_p, double* x_v, double* q_in) nogil:
    cdef double rc_g = pow(k[I_RCOMP], k[I_GAMMA_A] - 1.0)
    cdef double ga = k[I_GAMMA_A]
    cdef double e1 = 1.0 - 1.0 / ga
    cdef double rc_f = pow(k[I_RCOMP], 1.0 - ga)
    cdef double cq = (1.0 - k[I_X_CV]) / k[I_C_PA] + k[I_X_CV] / k[I_C_VA]
    cdef double pe1 = pow(Pi_e, e1)
    cdef double pei = pow(Pi_e, 1.0 / ga)
    cdef double xr = x_r[0], T1 = T_1[0]
    cdef double q, xp, xv, Te, xr_new, T1_new, dx, dT
    cdef int it
    for it in range(50):
        q = W_f * k[I_Q_HV] * (1.0 - xr) / W_eo if W_eo > 0.0 else 0.0
        xp = 1.0 + q * k[I_X_CV] / (k[I_C_VA] * T1 * rc_g)
        xv = 1.0 + q * (1.0 - k[I_X_CV]) / (
            k[I_C_PA] * (q * k[I_X_CV] / k[I_C_VA] + T1 * rc_g))
        Te = eta_sc * pe1 * rc_f * pow(xp, 1.0 / ga - 1.0) * (q * cq + T1 * rc_g)
        xr_new = pei * pow(xp, -1.0 / ga) / (k[I_RCOMP] * xv)
        T1_new = xr_new * Te + (1.0 - xr_new) * k[I_T_IM]
        dx = xr_new - xr
        dT = T1_new - T1
        xr += 0.5 * dx
        T1 += 0.5 * dT
        if dx < 1e-10 and dx > -1e-10 and dT < 1e-10 and dT > -1e-10:
            q = W_f * k[I_Q_HV] * (1.0 - xr) / W_eo if W_eo > 0.0 else 0.0
            xp = 1.0 + q * k[I_X_CV] / (k[I_C_VA] * T1 * rc_g)
            xv = 1.0 + q * (1.0 - k[I_X_CV]) / (
                k[I_C_PA] * (q * k[I_X_CV] / k[I_C_VA] + T1 * rc_g))
            Te = eta_sc * pe1 * rc_f * pow(xp, 1.0 / ga - 1.0) * (q * cq + T1 * rc_g)
            x_r[0] = xr
            T_1[0] = T1
            T_e[0] = Te
            x_p[0] = xp
            x_v[0] = xv
            q_in[0] = q
            return 1
    x_r[0] = xr
    T_1[0] = T1
    return 0


cdef int _derivs(const double* k, const double* lam, double T_amb, double p_amb,
                 const double* y, double ud, double ue, double uv, double ne,
                 double* x_r, double* T_1, double* out) nogil:
    cdef double A_egrmax = lam[0], A_vgtmax = lam[1], eta_sc = lam[2], h_tot = lam[3]
    cdef double p_im = y[0], p_em = y[1], w_t = y[2], u1 = y[3], u2 = y[4], uvt = y[5]
    cdef double w_g = w_t if w_t > OMEGA_MIN else OMEGA_MIN

    cdef double eta_vol = k[I_C_VOL1] * sqrt(p_im) + k[I_C_VOL2] * sqrt(ne) + k[I_C_VOL3]
    cdef double W_ei = eta_vol * p_im * ne * k[I_V_D] / (120.0 * k[I_R_A] * k[I_T_IM])
    cdef double W_f = 1e-6 / 120.0 * ud * ne * k[I_N_CYL]
    cdef double W_eo = W_f + W_ei
    if W_eo <= 0.0:
        return ST_NAN

    cdef double Pi_e = p_em / p_im
    cdef double T_e = 0.0, x_p = 0.0, x_v = 0.0, q_in = 0.0
    if not _solve_pair(k, Pi_e, W_f, W_eo, eta_sc, x_r, T_1, &T_e, &x_p, &x_v, &q_in):
        return ST_DIV
    cdef double T_em = T_amb + (T_e - T_amb) * exp(
        -h_tot * M_PI * k[I_D_PIPE] * k[I_L_PIPE] * k[I_N_PIPE] / (W_eo * k[I_C_PE]))

    cdef double u_egr_tilde = k[I_K_EGR] * u1 - (k[I_K_EGR] - 1.0) * u2
    cdef double vertex = -k[I_C_EGR2] / (2.0 * k[I_C_EGR1])
    cdef double f_egr
    if u_egr_tilde <= vertex:
        f_egr = k[I_C_EGR1] * u_egr_tilde * u_egr_tilde + k[I_C_EGR2] * u_egr_tilde + k[I_C_EGR3]
    else:
        f_egr = k[I_C_EGR3] - k[I_C_EGR2] * k[I_C_EGR2] / (4.0 * k[I_C_EGR1])
    if f_egr < 0.0:
        f_egr = 0.0
    cdef double ratio = p_im / p_em
    cdef double Pi_egr
    if ratio < k[I_PI_EGROPT]:
        Pi_egr = k[I_PI_EGROPT]
    elif ratio > 1.0:
        Pi_egr = 1.0
    else:
        Pi_egr = ratio
    cdef double u_psi = (1.0 - Pi_egr) / (1.0 - k[I_PI_EGROPT]) - 1.0
    cdef double Psi_egr = 1.0 - u_psi * u_psi
    cdef double A_egr = A_egrmax * f_egr
    cdef double W_egr = A_egr * p_em * Psi_egr / sqrt(T_em * k[I_R_E])

    cdef double Pi_t = p_amb / p_em
    cdef double pit = Pi_t if Pi_t < PI_T_CEIL else PI_T_CEIL
    cdef double arg = 1.0 - ((uvt - k[I_C_VGT2]) / k[I_C_VGT1]) ** 2
    cdef double f_vgt = k[I_C_F2] + k[I_C_F1] * sqrt(arg if arg > 0.0 else 0.0)
    cdef double f_pit = sqrt(1.0 - pow(pit, k[I_K_T]))
    cdef double F_vp = f_vgt * f_pit
    cdef double W_t = A_vgtmax * p_em * F_vp / sqrt(T_em * k[I_R_E])
    cdef double e_t = 1.0 - pow(pit, 1.0 - 1.0 / k[I_GAMMA_E])
    cdef double bsr = k[I_R_T] * w_g / sqrt(2.0 * k[I_C_PE] * T_em * e_t)
    cdef double dm = w_g - k[I_C_M2]
    cdef double c_m = k[I_C_M1] * pow(dm if dm > 0.0 else 0.0, k[I_C_M3])
    cdef double eta_tm = k[I_ETA_TM_MAX] - c_m * (bsr - k[I_BSR_OPT]) ** 2
    cdef double P_t_eta_m = 0.0 if Pi_t >= 1.0 else eta_tm * W_t * k[I_C_PE] * T_em * e_t

    cdef double Pi_c = p_im / p_amb
    cdef double e_c = pow(Pi_c, 1.0 - 1.0 / k[I_GAMMA_A]) - 1.0
    cdef double psi_c = 2.0 * k[I_C_PA] * T_amb * e_c / (k[I_RADC] * k[I_RADC] * w_g * w_g)
    cdef double c_psi1 = k[I_C_WPSI1] * w_g * w_g + k[I_C_WPSI2] * w_g + k[I_C_WPSI3]
    cdef double c_phi1 = k[I_C_WPHI1] * w_g * w_g + k[I_C_WPHI2] * w_g + k[I_C_WPHI3]
    arg = (1.0 - c_psi1 * (psi_c - k[I_C_PSI2]) ** 2) / c_phi1
    cdef double Phi_c = sqrt(arg if arg > 0.0 else 0.0) + k[I_C_PHI2]
    cdef double W_c = p_amb * M_PI * k[I_RADC] ** 3 * w_g * Phi_c / (k[I_R_A] * T_amb)
    cdef double dW = W_c - k[I_W_COPT]
    cdef double base = Pi_c - 1.0
    cdef double dp = pow(base if base > 0.0 else 0.0, k[I_C_PI]) - k[I_PI_COPT]
    cdef double eta_c = k[I_ETA_CMAX] - (k[I_A1] * dW * dW + 2.0 * k[I_A3] * dW * dp + k[I_A2] * dp * dp)
    cdef double P_c = W_c * k[I_C_PA] * T_amb * e_c / eta_c

    out[0] = k[I_R_A] * k[I_T_IM] / k[I_V_IM] * (W_c + W_egr - W_ei)
    out[1] = k[I_R_E] * T_em / k[I_V_EM] * (W_eo - W_t - W_egr)
    out[2] = (P_t_eta_m - P_c) / (k[I_J_T] * w_g)
    out[3] = (ue - u1) / k[I_TAU_EGR1]
    out[4] = (ue - u2) / k[I_TAU_EGR2]
    out[5] = (uv - uvt) / k[I_TAU_VGT]
    out[6] = x_r[0]
    out[7] = T_1[0]
    out[8] = u_egr_tilde
    out[9] = eta_vol
    out[10] = f_egr
    out[11] = F_vp
    out[12] = eta_tm
    out[13] = eta_c
    out[14] = Phi_c
    out[15] = Pi_e
    out[16] = Pi_egr
    out[17] = Psi_egr
    out[18] = Pi_t
    out[19] = Pi_c
    out[20] = bsr
    out[21] = W_ei
    out[22] = W_f
    out[23] = W_eo
    out[24] = W_egr
    out[25] = W_t
    out[26] = W_c
    out[27] = q_in
    out[28] = x_p
    out[29] = x_v
    out[30] = T_e
    out[31] = T_em
    out[32] = A_egr
    out[33] = P_c
    out[34] = P_t_eta_m
    return ST_OK


def integrate_loop(double[::1] consts, double[::1] lam, double T_amb, double p_amb,
                   double[:, ::1] ctrl_half, double[:, ::1] raw_ctrl,
                   double[::1] y0, double x_r0, double T_10,
                   double dt, Py_ssize_t n_steps, Py_ssize_t stride,
                   double[:, ::1] out):
    """Same contract as ``pycore.integrate_loop`` (see its docstring)."""
    if consts.shape[0] != N_CONSTS:
        raise ValueError("constants vector has wrong length")
    cdef const double* k = &consts[0]
    cdef const double* lm = &lam[0]
    cdef double y[6]
    cdef double yt[6]
    cdef double k1[6]
    cdef double k2[6]
    cdef double k3[6]
    cdef double k4[6]
    cdef double scratch[35]
    cdef double x_r = x_r0, T_1 = T_10
    cdef Py_ssize_t i, j, c0, row = 0
    cdef int st
    cdef int ok
    cdef const double* ud = &ctrl_half[0, 0]
    cdef const double* ue = &ctrl_half[1, 0]
    cdef const double* uv = &ctrl_half[2, 0]
    cdef const double* ne = &ctrl_half[3, 0]
    cdef const double* rue = &raw_ctrl[0, 0]
    cdef const double* ruv = &raw_ctrl[1, 0]
    for j in range(6):
        y[j] = y0[j]

    with nogil:
        for i in range(n_steps + 1):
            c0 = 2 * i
            if i % stride == 0:
                st = _derivs(k, lm, T_amb, p_amb, y, ud[c0], ue[c0], uv[c0], ne[c0], &x_r, &T_1, scratch)
                if st != ST_OK:
                    with gil:
                        return st, i
                out[row, 0] = i * dt
                for j in range(6):
                    out[row, 1 + j] = y[j]
                out[row, 7] = x_r
                out[row, 8] = T_1
                out[row, 9] = ud[c0]
                out[row, 10] = rue[c0]
                out[row, 11] = ruv[c0]
                out[row, 12] = ne[c0]
                out[row, 13] = ue[c0]
                out[row, 14] = uv[c0]
                for j in range(27):
                    out[row, 15 + j] = scratch[8 + j]
                for j in range(6):
                    out[row, 42 + j] = scratch[j]
                row += 1
            if i == n_steps:
                break

            st = _derivs(k, lm, T_amb, p_amb, y, ud[c0], ue[c0], uv[c0], ne[c0], &x_r, &T_1, scratch)
            if st != ST_OK:
                with gil:
                    return st, i
            for j in range(6):
                k1[j] = scratch[j]
                yt[j] = y[j] + 0.5 * dt * k1[j]
            st = _derivs(k, lm, T_amb, p_amb, yt, ud[c0 + 1], ue[c0 + 1], uv[c0 + 1], ne[c0 + 1], &x_r, &T_1, scratch)
            if st != ST_OK:
                with gil:
                    return st, i
            for j in range(6):
                k2[j] = scratch[j]
                yt[j] = y[j] + 0.5 * dt * k2[j]
            st = _derivs(k, lm, T_amb, p_amb, yt, ud[c0 + 1], ue[c0 + 1], uv[c0 + 1], ne[c0 + 1], &x_r, &T_1, scratch)
            if st != ST_OK:
                with gil:
                    return st, i
            for j in range(6):
                k3[j] = scratch[j]
                yt[j] = y[j] + dt * k3[j]
            st = _derivs(k, lm, T_amb, p_amb, yt, ud[c0 + 2], ue[c0 + 2], uv[c0 + 2], ne[c0 + 2], &x_r, &T_1, scratch)
            if st != ST_OK:
                with gil:
                    return st, i
            ok = 1
            for j in range(6):
                k4[j] = scratch[j]
                y[j] = y[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
                if not isfinite(y[j]):
                    ok = 0
            if not ok:
                with gil:
                    return ST_NAN, i
    return ST_OK, n_steps
