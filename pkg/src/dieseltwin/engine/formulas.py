"""Closed-form relations of the mean-value gas-flow model.

Every function here is pure and backend-agnostic: it accepts floats, numpy
arrays, or tape variables (``dieseltwin.nn.tape.Var``) and returns the same
kind.  The simulator evaluates these numerically; the inverse solver traces
them to obtain gradients.

Empirical quantities (volumetric efficiency, valve/turbine area ratios,
efficiencies, compressor flow coefficient) are supplied by an "empirical
source": either :class:`GroundTruthEmpiricals` below or a trained surrogate
set with the same method surface.
"""

from __future__ import annotations

import math

import numpy as np

from ..constants import AmbientConditions, EngineConstants
from ..nn import tape as bk

__all__ = [
    "EngineDomainError",
    "ExhaustFlowSingularity",
    "AlgebraicDivergence",
    "OMEGA_MIN",
    "PI_T_CEIL",
    "GroundTruthEmpiricals",
    "cylinder_flow",
    "cylinder_temperature",
    "egr_flow",
    "turbine",
    "compressor",
    "egr_valve_position",
    "solve_algebraic_pair",
    "state_derivatives",
]

# Lower clamp for the turbo speed wherever it appears in a denominator.
OMEGA_MIN = 1.0
# Turbine pressure ratio is clamped just below 1 to keep sqrt(1 - Pi^K) real.
PI_T_CEIL = 1.0 - 1e-9


class EngineDomainError(ValueError):
    """Raised when inputs leave the model's physical domain."""


class ExhaustFlowSingularity(EngineDomainError):
    """Zero exhaust flow makes the manifold-temperature exponent diverge."""


class AlgebraicDivergence(RuntimeError):
    """Fixed-point iteration for (x_r, T_1) failed to converge."""

    def __init__(self, message, last_iterate):
        super().__init__(message)
        self.last_iterate = last_iterate


def _require_finite(*values):
    for v in values:
        if isinstance(v, bk.Var):
            return  # traced values are checked at the loss level
        if not np.all(np.isfinite(v)):
            raise EngineDomainError("non-finite input")


# -- ground-truth empirical formulae ---------------------------------------


class GroundTruthEmpiricals:
    """Closed-form empirical relations parameterized by EngineConstants."""

    def __init__(self, k: EngineConstants):
        self.k = k

    def eta_vol(self, p_im, n_e):
        k = self.k
        return k.c_vol1 * bk.sqrt(p_im) + k.c_vol2 * bk.sqrt(n_e) + k.c_vol3

    def f_egr(self, u_egr_tilde):
        k = self.k
        vertex = -k.c_egr2 / (2.0 * k.c_egr1)
        quad = k.c_egr1 * bk.square(u_egr_tilde) + k.c_egr2 * u_egr_tilde + k.c_egr3
        plateau = k.c_egr3 - k.c_egr2**2 / (4.0 * k.c_egr1)
        return bk.where(np.asarray(bk.value_of(u_egr_tilde)) <= vertex, quad, plateau)

    def f_vgt(self, u_vgt_tilde):
        k = self.k
        arg = 1.0 - bk.square((u_vgt_tilde - k.c_vgt2) / k.c_vgt1)
        return k.c_f2 + k.c_f1 * bk.sqrt(bk.maximum(arg, 0.0))

    def f_pit(self, Pi_t):
        k = self.k
        return bk.sqrt(1.0 - bk.minimum(Pi_t, PI_T_CEIL) ** k.K_t)

    def F_vgt_pit(self, u_vgt_tilde, Pi_t):
        return self.f_vgt(u_vgt_tilde) * self.f_pit(Pi_t)

    def eta_tm(self, omega_t, T_em, Pi_t):
        k = self.k
        pit = bk.minimum(Pi_t, PI_T_CEIL)
        bsr = BSR(omega_t, T_em, pit, k)
        c_m = k.c_m1 * bk.maximum(omega_t - k.c_m2, 0.0) ** k.c_m3
        return k.eta_tm_max - c_m * bk.square(bsr - k.BSR_opt)

    def eta_c(self, W_c, Pi_c):
        k = self.k
        # (Pi_c - 1)^c_pi needs a non-negative base during deep transients.
        pic = bk.maximum(Pi_c - 1.0, 0.0) ** k.c_pi
        dW = W_c - k.W_copt
        dp = pic - k.pi_copt
        return k.eta_cmax - (
            k.a1 * bk.square(dW) + 2.0 * k.a3 * dW * dp + k.a2 * bk.square(dp)
        )

    def phi_c(self, T_amb, Pi_c, omega_t):
        k = self.k
        psi_c = (
            2.0
            * k.c_pa
            * T_amb
            * (Pi_c ** (1.0 - 1.0 / k.gamma_a) - 1.0)
            / (k.R_c**2 * bk.square(omega_t))
        )
        c_psi1 = k.c_wpsi1 * bk.square(omega_t) + k.c_wpsi2 * omega_t + k.c_wpsi3
        c_phi1 = k.c_wphi1 * bk.square(omega_t) + k.c_wphi2 * omega_t + k.c_wphi3
        arg = (1.0 - c_psi1 * bk.square(psi_c - k.c_psi2)) / c_phi1
        return bk.sqrt(bk.maximum(arg, 0.0)) + k.c_phi2


def BSR(omega_t, T_em, Pi_t, k: EngineConstants):
    """Blade speed ratio of the turbine."""
    return (
        k.R_t
        * omega_t
        / bk.sqrt(2.0 * k.c_pe * T_em * (1.0 - Pi_t ** (1.0 - 1.0 / k.gamma_e)))
    )


# -- engine blocks ----------------------------------------------------------


def cylinder_flow(p_im, n_e, u_delta, eta_vol, k: EngineConstants):
    """Mass flows into and out of the cylinders: (W_ei, W_f, W_eo)."""
    _require_finite(p_im, n_e, u_delta, eta_vol)
    W_ei = eta_vol * p_im * n_e * k.V_d / (120.0 * k.R_a * k.T_im)
    W_f = 1e-6 / 120.0 * u_delta * n_e * k.n_cyl
    W_eo = W_f + W_ei
    return W_ei, W_f, W_eo


def cylinder_temperature(
    p_im,
    p_em,
    x_r,
    T_1,
    W_ei,
    W_f,
    eta_sc,
    h_tot,
    T_amb,
    k: EngineConstants,
):
    """Combustion/exhaust temperatures given resolved (x_r, T_1).

    Returns (x_p, x_v, q_in, T_e, T_em).  W_ei + W_f must be positive: the
    heat-loss exponent diverges at zero exhaust flow.
    """
    W_eo = W_ei + W_f
    w = bk.value_of(W_eo)
    if np.any(np.asarray(w) <= 0.0):
        raise ExhaustFlowSingularity("W_eo must be positive for T_em")
    Pi_e = p_em / p_im
    q_in = W_f * k.q_hv * (1.0 - x_r) / W_eo
    rc_g = k.r_c ** (k.gamma_a - 1.0)
    x_p = 1.0 + q_in * k.x_cv / (k.c_va * T_1 * rc_g)
    x_v = 1.0 + q_in * (1.0 - k.x_cv) / (
        k.c_pa * (q_in * k.x_cv / k.c_va + T_1 * rc_g)
    )
    T_e = (
        eta_sc
        * Pi_e ** (1.0 - 1.0 / k.gamma_a)
        * k.r_c ** (1.0 - k.gamma_a)
        * x_p ** (1.0 / k.gamma_a - 1.0)
        * (q_in * ((1.0 - k.x_cv) / k.c_pa + k.x_cv / k.c_va) + T_1 * rc_g)
    )
    T_em = T_amb + (T_e - T_amb) * bk.exp(
        -h_tot * math.pi * k.d_pipe * k.l_pipe * k.n_pipe / (W_eo * k.c_pe)
    )
    return x_p, x_v, q_in, T_e, T_em


def implied_x_r(p_im, p_em, x_p, x_v, k: EngineConstants):
    """Residual gas fraction implied by the cycle relations."""
    Pi_e = p_em / p_im
    return Pi_e ** (1.0 / k.gamma_a) * x_p ** (-1.0 / k.gamma_a) / (k.r_c * x_v)


def egr_flow(p_im, p_em, T_em, A_egrmax, f_egr, k: EngineConstants):
    """EGR valve flow: (Pi_egr, Psi_egr, A_egr, W_egr); f_egr must be >= 0."""
    _require_finite(p_im, p_em, T_em, A_egrmax, f_egr)
    Pi_egr = bk.clip(p_im / p_em, k.Pi_egropt, 1.0)
    Psi_egr = 1.0 - bk.square((1.0 - Pi_egr) / (1.0 - k.Pi_egropt) - 1.0)
    A_egr = A_egrmax * f_egr
    W_egr = A_egr * p_em * Psi_egr / bk.sqrt(T_em * k.R_e)
    return Pi_egr, Psi_egr, A_egr, W_egr


def turbine(
    p_em, T_em, omega_t, A_vgtmax, F_vgt_pit, eta_tm, p_amb, k: EngineConstants
):
    """Turbine flow and effective power: (Pi_t, W_t, BSR, P_t_eta_m).

    At Pi_t >= 1 there is no expansion work; the power is forced to zero.
    """
    _require_finite(p_em, T_em, omega_t, A_vgtmax, F_vgt_pit, eta_tm)
    Pi_t = p_amb / p_em
    W_t = A_vgtmax * p_em * F_vgt_pit / bk.sqrt(T_em * k.R_e)
    pit = bk.minimum(Pi_t, PI_T_CEIL)
    bsr = BSR(omega_t, T_em, pit, k)
    power = eta_tm * W_t * k.c_pe * T_em * (1.0 - pit ** (1.0 - 1.0 / k.gamma_e))
    no_work = np.asarray(bk.value_of(Pi_t)) >= 1.0
    P_t_eta_m = bk.where(no_work, 0.0 * power, power)
    return Pi_t, W_t, bsr, P_t_eta_m


def compressor(p_im, omega_t, eta_c, Phi_c, ambient: AmbientConditions, k: EngineConstants):
    """Compressor flow and power: (Pi_c, W_c, P_c)."""
    w = bk.value_of(omega_t)
    if np.any(np.asarray(w) <= 0.0):
        raise EngineDomainError("omega_t must be positive in the compressor")
    _require_finite(p_im, omega_t, eta_c, Phi_c)
    Pi_c = p_im / ambient.p_amb
    W_c = ambient.p_amb * math.pi * k.R_c**3 * omega_t * Phi_c / (k.R_a * ambient.T_amb)
    P_c = W_c * k.c_pa * ambient.T_amb * (Pi_c ** (1.0 - 1.0 / k.gamma_a) - 1.0) / eta_c
    return Pi_c, W_c, P_c


def egr_valve_position(u_egr1_t, u_egr2_t, k: EngineConstants):
    """Effective EGR valve position from the two actuator states."""
    return k.K_egr * u_egr1_t - (k.K_egr - 1.0) * u_egr2_t


# -- algebraic pair ---------------------------------------------------------


def solve_algebraic_pair(
    p_im,
    p_em,
    n_e,
    u_delta,
    eta_sc,
    k: EngineConstants,
    warm_start=(0.05, 320.0),
    empiricals: GroundTruthEmpiricals | None = None,
    tol: float = 1e-10,
    max_iter: int = 50,
    damping: float = 0.5,
):
    """Resolve the coupled residual-gas-fraction / intake-close temperature pair.

    Damped fixed-point iteration, warm-started from the previous solution.
    Returns (x_r, T_1, T_e, x_p, x_v, q_in).  Scalar-only: the inverse
    solver never calls this (its networks predict x_r and T_1 directly).
    """
    src = empiricals or GroundTruthEmpiricals(k)
    eta_vol = src.eta_vol(p_im, n_e)
    W_ei, W_f, W_eo = cylinder_flow(p_im, n_e, u_delta, eta_vol, k)
    x_r, T_1 = float(warm_start[0]), float(warm_start[1])
    if not (0.0 <= x_r < 1.0 and T_1 > 0.0):
        raise EngineDomainError("warm start outside domain")

    Pi_e = p_em / p_im
    rc_g = k.r_c ** (k.gamma_a - 1.0)
    for _ in range(max_iter):
        q_in = W_f * k.q_hv * (1.0 - x_r) / W_eo if W_eo > 0.0 else 0.0
        x_p = 1.0 + q_in * k.x_cv / (k.c_va * T_1 * rc_g)
        x_v = 1.0 + q_in * (1.0 - k.x_cv) / (
            k.c_pa * (q_in * k.x_cv / k.c_va + T_1 * rc_g)
        )
        T_e = (
            eta_sc
            * Pi_e ** (1.0 - 1.0 / k.gamma_a)
            * k.r_c ** (1.0 - k.gamma_a)
            * x_p ** (1.0 / k.gamma_a - 1.0)
            * (q_in * ((1.0 - k.x_cv) / k.c_pa + k.x_cv / k.c_va) + T_1 * rc_g)
        )
        x_r_new = Pi_e ** (1.0 / k.gamma_a) * x_p ** (-1.0 / k.gamma_a) / (k.r_c * x_v)
        T_1_new = x_r_new * T_e + (1.0 - x_r_new) * k.T_im
        dx = x_r_new - x_r
        dT = T_1_new - T_1
        x_r += damping * dx
        T_1 += damping * dT
        if abs(dx) < tol and abs(dT) < tol:
            q_in = W_f * k.q_hv * (1.0 - x_r) / W_eo if W_eo > 0.0 else 0.0
            x_p = 1.0 + q_in * k.x_cv / (k.c_va * T_1 * rc_g)
            x_v = 1.0 + q_in * (1.0 - k.x_cv) / (
                k.c_pa * (q_in * k.x_cv / k.c_va + T_1 * rc_g)
            )
            T_e = (
                eta_sc
                * Pi_e ** (1.0 - 1.0 / k.gamma_a)
                * k.r_c ** (1.0 - k.gamma_a)
                * x_p ** (1.0 / k.gamma_a - 1.0)
                * (q_in * ((1.0 - k.x_cv) / k.c_pa + k.x_cv / k.c_va) + T_1 * rc_g)
            )
            return x_r, T_1, T_e, x_p, x_v, q_in
    raise AlgebraicDivergence(
        f"no fixed point after {max_iter} iterations", (x_r, T_1)
    )


# -- full state derivative --------------------------------------------------


def state_derivatives(
    state,
    ctrl,
    x_r,
    T_1,
    params_physical,
    ambient: AmbientConditions,
    k: EngineConstants,
    empiricals: GroundTruthEmpiricals | None = None,
    full_output: bool = False,
):
    """Time derivatives of the six dynamic states.

    ``state`` is (p_im, p_em, omega_t, u_egr1_t, u_egr2_t, u_vgt_t);
    ``ctrl`` is (u_delta, u_egr_delayed, u_vgt_delayed, n_e); ``x_r`` and
    ``T_1`` must already be resolved.  ``params_physical`` is the masked
    and scaled (A_egrmax, A_vgtmax, eta_sc, h_tot).
    """
    p_im, p_em, omega_t, u1, u2, uv = state
    u_delta, u_egr_d, u_vgt_d, n_e = ctrl
    A_egrmax, A_vgtmax, eta_sc, h_tot = params_physical
    src = empiricals or GroundTruthEmpiricals(k)

    omega_g = bk.maximum(omega_t, OMEGA_MIN)

    eta_vol = src.eta_vol(p_im, n_e)
    W_ei, W_f, W_eo = cylinder_flow(p_im, n_e, u_delta, eta_vol, k)
    x_p, x_v, q_in, T_e, T_em = cylinder_temperature(
        p_im, p_em, x_r, T_1, W_ei, W_f, eta_sc, h_tot, ambient.T_amb, k
    )

    u_egr_tilde = egr_valve_position(u1, u2, k)
    # egr_flow requires f_egr >= 0; the raw quadratic can dip below zero
    # during closing transients when u_egr_tilde goes negative.
    f_egr = bk.maximum(src.f_egr(u_egr_tilde), 0.0)
    Pi_egr, Psi_egr, A_egr, W_egr = egr_flow(p_im, p_em, T_em, A_egrmax, f_egr, k)

    Pi_t = ambient.p_amb / p_em
    F_vp = src.F_vgt_pit(uv, Pi_t)
    eta_tm = src.eta_tm(omega_g, T_em, Pi_t)
    Pi_t, W_t, bsr, P_t_eta_m = turbine(
        p_em, T_em, omega_g, A_vgtmax, F_vp, eta_tm, ambient.p_amb, k
    )

    Pi_c = p_im / ambient.p_amb
    Phi_c = src.phi_c(ambient.T_amb, Pi_c, omega_g)
    W_c = ambient.p_amb * math.pi * k.R_c**3 * omega_g * Phi_c / (k.R_a * ambient.T_amb)
    eta_c = src.eta_c(W_c, Pi_c)
    Pi_c, W_c, P_c = compressor(p_im, omega_g, eta_c, Phi_c, ambient, k)

    dp_im = k.R_a * k.T_im / k.V_im * (W_c + W_egr - W_ei)
    dp_em = k.R_e * T_em / k.V_em * (W_eo - W_t - W_egr)
    domega = (P_t_eta_m - P_c) / (k.J_t * omega_g)
    du1 = (u_egr_d - u1) / k.tau_egr1
    du2 = (u_egr_d - u2) / k.tau_egr2
    duv = (u_vgt_d - uv) / k.tau_vgt

    derivs = (dp_im, dp_em, domega, du1, du2, duv)
    if not full_output:
        return derivs
    inter = {
        "eta_vol": eta_vol, "W_ei": W_ei, "W_f": W_f, "W_eo": W_eo,
        "x_p": x_p, "x_v": x_v, "q_in": q_in, "T_e": T_e, "T_em": T_em,
        "u_egr_tilde": u_egr_tilde, "f_egr": f_egr, "Pi_egr": Pi_egr,
        "Psi_egr": Psi_egr, "A_egr": A_egr, "W_egr": W_egr,
        "Pi_t": Pi_t, "F_vgt_pit": F_vp, "eta_tm": eta_tm, "W_t": W_t,
        "BSR": bsr, "P_t_eta_m": P_t_eta_m,
        "Pi_c": Pi_c, "Phi_c": Phi_c, "W_c": W_c, "eta_c": eta_c, "P_c": P_c,
    }
    return derivs, inter
