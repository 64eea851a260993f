"""Inverse-problem assembly: one 60 s segment plus frozen helper networks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..constants import AmbientConditions, EngineConstants
from ..deeponet import WINDOW_POINTS, CausalDeepONet
from ..engine import GroundTruthEmpiricals
from ..sim import TimeSeriesDataset

__all__ = [
    "CHANNEL_SCALES",
    "DATA_CHANNELS",
    "NET_LAYOUT",
    "InverseProblem",
    "build_problem",
]

# Normalization scales shared by residuals and data misfits.
CHANNEL_SCALES = {
    "p_im": 1e5,
    "p_em": 1e5,
    "omega_t": 5e3,
    "x_r": 1.0,
    "T_1": 300.0,
    "T_em": 300.0,
}

DATA_CHANNELS = ("p_im", "p_em", "omega_t", "W_egr", "T_em")

# State networks: (widths, output transform, predicted channels).
NET_LAYOUT = {
    "n1": ((1, 15, 15, 15, 2), ("softplus", 0.0, 1e5), ("p_im", "p_em")),
    "n2": ((1, 15, 15, 15, 1), ("sigmoid", 0.0, 1.0), ("x_r",)),
    "n3": ((1, 15, 15, 15, 1), ("softplus", 230.0 / 300.0, 300.0), ("T_1",)),
    "n4": ((1, 15, 15, 1), ("softplus", 0.0, 5e3), ("omega_t",)),
}


@dataclass
class InverseProblem:
    """Everything one estimation run needs, frozen up front.

    ``data_idx`` indexes the measured samples into the 301-point residual
    grid (every other point for the 151-point regime).  ``actuators`` holds
    the operator-network actuator trajectories for the window, and
    ``u_egr_tilde`` the effective EGR position derived from them.
    """

    t: np.ndarray                  # residual grid, 0..60 s (301,)
    t_norm: np.ndarray             # scaled to [-1, 1], shape (301, 1)
    tangent_seed: float            # d(t_norm)/dt in 1/s
    controls: dict                 # u_delta, n_e, u_egr_del, u_vgt_del on the grid
    actuators: dict                # u_egr1_t, u_egr2_t, u_vgt_t on the grid
    u_egr_tilde: np.ndarray
    data_idx: np.ndarray
    data: dict                     # channel -> measured values at data_idx
    initial: dict                  # state values at t = 0 (known per segment)
    empiricals: object             # surrogate or ground-truth source
    k: EngineConstants
    ambient: AmbientConditions
    wegr_scale: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def n_data(self) -> int:
        return int(self.data_idx.size)

    @property
    def n_residual(self) -> int:
        return int(self.t.size)


def _data_indices(n_grid: int, n_data: int) -> np.ndarray:
    if n_data == n_grid:
        return np.arange(n_grid)
    stride = (n_grid - 1) // (n_data - 1)
    if (n_data - 1) * stride != n_grid - 1:
        raise ValueError(f"{n_data} data points do not tile a {n_grid}-point grid")
    return np.arange(0, n_grid, stride)


def build_problem(
    segment: TimeSeriesDataset,
    empiricals,
    k: EngineConstants,
    ambient: AmbientConditions,
    n_data: int = 301,
    deeponet_egr: CausalDeepONet | None = None,
    deeponet_vgt: CausalDeepONet | None = None,
    actuator_initial: tuple | None = None,
) -> InverseProblem:
    """Assemble a problem from a 60 s segment.

    Actuator trajectories come from the operator networks when given (the
    production path), else from the segment's stored channels (used by the
    residual-zero certificate).  ``actuator_initial`` overrides the
    operator networks' initial conditions, e.g. to chain window endpoints.
    """
    if len(segment) != WINDOW_POINTS:
        raise ValueError(f"expected a {WINDOW_POINTS}-point segment, got {len(segment)}")
    t = segment.t - segment.t[0]
    duration = float(t[-1])
    t_norm = (2.0 * t / duration - 1.0).reshape(-1, 1)

    controls = {
        name: segment.channels[name].copy()
        for name in ("u_delta", "n_e", "u_egr_del", "u_vgt_del")
    }

    if actuator_initial is None:
        actuator_initial = (
            segment.channels["u_egr1_t"][0],
            segment.channels["u_egr2_t"][0],
            segment.channels["u_vgt_t"][0],
        )
    if deeponet_egr is not None:
        pred = deeponet_egr.predict_window(controls["u_egr_del"], actuator_initial[:2])
        u1, u2 = pred[:, 0], pred[:, 1]
    else:
        u1 = segment.channels["u_egr1_t"].copy()
        u2 = segment.channels["u_egr2_t"].copy()
    if deeponet_vgt is not None:
        uv = deeponet_vgt.predict_window(controls["u_vgt_del"], actuator_initial[2:3])[:, 0]
    else:
        uv = segment.channels["u_vgt_t"].copy()
    actuators = {"u_egr1_t": u1, "u_egr2_t": u2, "u_vgt_t": uv}
    u_egr_tilde = k.K_egr * u1 - (k.K_egr - 1.0) * u2

    data_idx = _data_indices(len(segment), n_data)
    data = {ch: segment.channels[ch][data_idx].copy() for ch in DATA_CHANNELS}

    # Initial conditions are known per segment; use clean values when the
    # segment carries a noisy/clean pair.
    def _ic(ch):
        clean = segment.channels.get(ch + "_clean")
        return float(clean[0]) if clean is not None else float(segment.channels[ch][0])

    initial = {ch: _ic(ch) for ch in ("p_im", "p_em", "omega_t", "x_r", "T_1")}

    # The EGR-flow misfit stays in raw kg/s: the channel is not a network
    # output, and its per-point weights (alpha = 2e3) presume raw units.
    # Normalizing it would let that term dominate and corrupt the
    # temperature chain through the sqrt(T_em) path.
    wegr_scale = 1.0

    return InverseProblem(
        t=t,
        t_norm=t_norm,
        tangent_seed=2.0 / duration,
        controls=controls,
        actuators=actuators,
        u_egr_tilde=u_egr_tilde,
        data_idx=data_idx,
        data=data,
        initial=initial,
        empiricals=empiricals,
        k=k,
        ambient=ambient,
        wegr_scale=wegr_scale,
        meta=dict(segment.meta),
    )
