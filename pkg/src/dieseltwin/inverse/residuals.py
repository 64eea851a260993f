"""Physics residuals and the composite training loss.

The residual graph re-derives every intermediate from the state networks'
outputs through the engine blocks, with empirical quantities supplied by
the problem's (frozen) source.  All residuals and misfits are normalized
by their channel scales so the fixed loss multipliers act on comparable
magnitudes.
"""

from __future__ import annotations

import numpy as np

from ..constants import PARAM_MASKS, PARAM_SCALES
from ..engine import formulas
from ..nn import tape as bk
from .problem import CHANNEL_SCALES, InverseProblem

__all__ = ["masked_params", "physics_residuals", "total_loss"]


def masked_params(latents):
    """Masked + scaled physical parameters from (possibly traced) latents."""
    out = []
    for i, (mask, scale) in enumerate(zip(PARAM_MASKS, PARAM_SCALES)):
        r = latents[i]
        v = bk.exp(r) if mask == "exp" else bk.softplus(r)
        out.append(v * scale)
    return tuple(out)


def physics_residuals(states, latents, problem: InverseProblem, f_egr=None):
    """Normalized residual vectors for the five governing relations.

    ``states`` maps channel -> trajectory on the residual grid, plus the
    time derivatives ``dp_im``, ``dp_em``, ``domega_t``.  ``f_egr`` may be
    passed precomputed (it depends only on the frozen actuator states).
    Returns (residuals, intermediates).
    """
    k = problem.k
    amb = problem.ambient
    src = problem.empiricals
    p_im, p_em = states["p_im"], states["p_em"]
    omega = states["omega_t"]
    x_r, T_1 = states["x_r"], states["T_1"]

    A_egrmax, A_vgtmax, eta_sc, h_tot = masked_params(latents)

    omega_g = bk.maximum(omega, formulas.OMEGA_MIN)
    n_e = problem.controls["n_e"]
    u_delta = problem.controls["u_delta"]

    eta_vol = src.eta_vol(p_im, n_e)
    W_ei, W_f, W_eo = formulas.cylinder_flow(p_im, n_e, u_delta, eta_vol, k)
    x_p, x_v, q_in, T_e, T_em = formulas.cylinder_temperature(
        p_im, p_em, x_r, T_1, W_ei, W_f, eta_sc, h_tot, amb.T_amb, k
    )

    if f_egr is None:
        f_egr = bk.maximum(src.f_egr(problem.u_egr_tilde), 0.0)
    Pi_egr, Psi_egr, A_egr, W_egr = formulas.egr_flow(p_im, p_em, T_em, A_egrmax, f_egr, k)

    Pi_t = amb.p_amb / p_em
    F_vp = src.F_vgt_pit(problem.actuators["u_vgt_t"], Pi_t)
    eta_tm = src.eta_tm(omega_g, T_em, Pi_t)
    Pi_t, W_t, bsr, P_t_eta_m = formulas.turbine(
        p_em, T_em, omega_g, A_vgtmax, F_vp, eta_tm, amb.p_amb, k
    )

    Pi_c = p_im / amb.p_amb
    Phi_c = src.phi_c(amb.T_amb, Pi_c, omega_g)
    W_c = amb.p_amb * np.pi * k.R_c**3 * omega_g * Phi_c / (k.R_a * amb.T_amb)
    eta_c = src.eta_c(W_c, Pi_c)
    P_c = W_c * k.c_pa * amb.T_amb * (Pi_c ** (1.0 - 1.0 / k.gamma_a) - 1.0) / eta_c

    r_pim = (
        states["dp_im"] - k.R_a * k.T_im / k.V_im * (W_c + W_egr - W_ei)
    ) / CHANNEL_SCALES["p_im"]
    r_pem = (
        states["dp_em"] - k.R_e * T_em / k.V_em * (W_eo - W_t - W_egr)
    ) / CHANNEL_SCALES["p_em"]
    r_om = (
        states["domega_t"] - (P_t_eta_m - P_c) / (k.J_t * omega_g)
    ) / CHANNEL_SCALES["omega_t"]
    r_xr = x_r - formulas.implied_x_r(p_im, p_em, x_p, x_v, k)
    r_T1 = (T_1 - (x_r * T_e + (1.0 - x_r) * k.T_im)) / CHANNEL_SCALES["T_1"]

    residuals = {"p_im": r_pim, "p_em": r_pem, "omega_t": r_om, "x_r": r_xr, "T_1": r_T1}
    inter = {
        "eta_vol": eta_vol, "W_ei": W_ei, "W_f": W_f, "W_eo": W_eo,
        "x_p": x_p, "x_v": x_v, "q_in": q_in, "T_e": T_e, "T_em": T_em,
        "f_egr": f_egr, "Pi_egr": Pi_egr, "Psi_egr": Psi_egr, "A_egr": A_egr,
        "W_egr": W_egr, "Pi_t": Pi_t, "F_vgt_pit": F_vp, "eta_tm": eta_tm,
        "W_t": W_t, "BSR": bsr, "P_t_eta_m": P_t_eta_m,
        "Pi_c": Pi_c, "Phi_c": Phi_c, "W_c": W_c, "eta_c": eta_c, "P_c": P_c,
    }
    return residuals, inter


def total_loss(states, latents, weights, problem: InverseProblem, f_egr=None):
    """Composite loss: physics + initial conditions + weighted data misfits.

    ``weights`` is a SelfAdaptiveWeights holding raw (pre-softplus) values,
    possibly as traced Vars during the ascent phase.  Returns (loss,
    components) where components are plain floats for logging.
    """
    residuals, inter = physics_residuals(states, latents, problem, f_egr=f_egr)

    lam_T1 = bk.softplus(weights.lam_T1[0])
    lam_Tem = bk.softplus(weights.lam_Tem[0])

    phys = {
        "p_im": bk.vmean(bk.square(residuals["p_im"])),
        "p_em": bk.vmean(bk.square(residuals["p_em"])),
        "omega_t": bk.vmean(bk.square(residuals["omega_t"])),
        "x_r": bk.vmean(bk.square(residuals["x_r"])),
        "T_1": bk.vmean(bk.square(residuals["T_1"])),
    }
    loss = phys["p_im"] + phys["p_em"] + phys["omega_t"]
    loss = loss + 100.0 * phys["x_r"] + lam_T1 * phys["T_1"]

    ic = {}
    for ch, factor in (
        ("p_im", 1.0), ("p_em", 1.0), ("omega_t", 1.0), ("x_r", 100.0), ("T_1", 100.0),
    ):
        err = (states[ch][0] - problem.initial[ch]) / CHANNEL_SCALES[ch]
        ic[ch] = bk.square(err)
        loss = loss + factor * ic[ch]

    idx = problem.data_idx
    data = {}
    for ch, lam_raw in (
        ("p_im", weights.lam_pim),
        ("p_em", weights.lam_pem),
        ("omega_t", weights.lam_omega),
    ):
        lam = bk.softplus(lam_raw)
        err = (states[ch][idx] - problem.data[ch]) / CHANNEL_SCALES[ch]
        data[ch] = bk.vmean(bk.square(err * lam))
        loss = loss + data[ch]
    lam_w = bk.softplus(weights.lam_wegr)
    err_w = (inter["W_egr"][idx] - problem.data["W_egr"]) / problem.wegr_scale
    data["W_egr"] = bk.vmean(bk.square(err_w * lam_w))
    loss = loss + data["W_egr"]
    err_t = (inter["T_em"][idx] - problem.data["T_em"]) / CHANNEL_SCALES["T_em"]
    data["T_em"] = lam_Tem * bk.vmean(bk.square(err_t))
    loss = loss + data["T_em"]

    components = {
        "physics": {kk: float(bk.value_of(v)) for kk, v in phys.items()},
        "initial": {kk: float(bk.value_of(v)) for kk, v in ic.items()},
        "data": {kk: float(bk.value_of(v)) for kk, v in data.items()},
        "total": float(bk.value_of(loss)),
    }
    return loss, components
