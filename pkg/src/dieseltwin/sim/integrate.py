"""Fixed-step RK4 trajectory integration with input delays.

The control channels are exogenous, so delays are applied by resampling
the drive cycle at ``t - tau`` on the half-step grid before the loop runs
(linear interpolation, pre-window values held at the t = 0 value).  The
loop itself is the compiled kernel when available, else its pure-Python
twin.
"""

from __future__ import annotations

import numpy as np

from ..constants import AmbientConditions, EngineConstants, UnknownParams
from ..engine import _core, pycore
from .dataset import TimeSeriesDataset
from .drive_cycle import DriveCycle

__all__ = ["SimulationAborted", "integrate", "default_initial_state", "CHANNELS"]

CHANNELS = pycore.CHANNELS


class SimulationAborted(RuntimeError):
    def __init__(self, reason: str, time: float):
        super().__init__(f"{reason} at t = {time:.4f} s")
        self.time = time
        self.reason = reason


def _half_grid_controls(cycle: DriveCycle, k: EngineConstants, dt_sim: float, n_steps: int):
    th = np.arange(2 * n_steps + 1) * (dt_sim / 2.0)
    ctrl = np.ascontiguousarray(
        np.vstack(
            [
                cycle.sample("u_delta", th),
                cycle.sample("u_egr", np.maximum(th - k.tau_degr, 0.0)),
                cycle.sample("u_vgt", np.maximum(th - k.tau_dvgt, 0.0)),
                cycle.sample("n_e", th),
            ]
        )
    )
    raw = np.ascontiguousarray(
        np.vstack([cycle.sample("u_egr", th), cycle.sample("u_vgt", th)])
    )
    return ctrl, raw


def integrate(
    cycle: DriveCycle,
    k: EngineConstants,
    params: UnknownParams,
    ambient: AmbientConditions,
    x0,
    dt_sim: float = 0.01,
    dt_out: float = 0.2,
    x_r0: float = 0.05,
    T_10: float = 320.0,
    backend: str | None = None,
    meta: dict | None = None,
) -> TimeSeriesDataset:
    """Integrate the six-state model over the cycle and record all channels.

    ``backend`` forces "compiled" or "python"; default picks compiled when
    built.  Raises :class:`SimulationAborted` on algebraic divergence or a
    non-finite state.
    """
    stride = dt_out / dt_sim
    if abs(stride - round(stride)) > 1e-9:
        raise ValueError("dt_out must be an integer multiple of dt_sim")
    stride = int(round(stride))
    if k.tau_degr < 0 or k.tau_dvgt < 0:
        raise ValueError("input delays must be non-negative")
    n_steps = int(round(cycle.duration / dt_sim))
    if n_steps % stride != 0:
        raise ValueError("cycle duration must be a whole number of output steps")

    ctrl, raw = _half_grid_controls(cycle, k, dt_sim, n_steps)
    lam = np.asarray(params.physical())
    x0 = np.asarray(x0, dtype=float)
    out = np.zeros((n_steps // stride + 1, len(CHANNELS)))

    if backend is None:
        backend = "compiled" if _core is not None else "python"
    if backend == "compiled":
        if _core is None:
            raise RuntimeError("compiled core is not available")
        status, idx = _core.integrate_loop(
            k.pack(), lam, ambient.T_amb, ambient.p_amb, ctrl, raw,
            x0, x_r0, T_10, dt_sim, n_steps, stride, out,
        )
    elif backend == "python":
        status, idx = pycore.integrate_loop(
            k, tuple(lam), ambient.T_amb, ambient.p_amb, ctrl, raw,
            x0, x_r0, T_10, dt_sim, n_steps, stride, out,
        )
    else:
        raise ValueError(f"unknown backend {backend!r}")

    if status == pycore.STATUS_ALGEBRAIC_DIVERGENCE:
        raise SimulationAborted("algebraic divergence", idx * dt_sim)
    if status == pycore.STATUS_NONFINITE:
        raise SimulationAborted("non-finite state", idx * dt_sim)

    meta = dict(meta or {})
    meta.setdefault("params_normalized", [float(v) for v in params.normalized()])
    meta.setdefault("ambient", {"T_amb": ambient.T_amb, "p_amb": ambient.p_amb})
    meta.setdefault("dt_sim", dt_sim)
    meta.setdefault("backend", backend)
    if cycle.seed is not None:
        meta.setdefault("cycle_seed", cycle.seed)
    channels = {name: out[:, i].copy() for i, name in enumerate(CHANNELS) if name != "t"}
    return TimeSeriesDataset(t=out[:, 0].copy(), channels=channels, dt=dt_out, meta=meta)


def default_initial_state(cycle: DriveCycle) -> np.ndarray:
    """Plausible cold state consistent with the cycle's initial valves."""
    ue0 = float(cycle.channels["u_egr"][0])
    uv0 = float(cycle.channels["u_vgt"][0])
    return np.array([1.2e5, 1.3e5, 3000.0, ue0, ue0, uv0])


def settle(
    cycle: DriveCycle,
    k: EngineConstants,
    params: UnknownParams,
    ambient: AmbientConditions,
    seconds: float = 30.0,
    dt_sim: float = 0.01,
    backend: str | None = None,
):
    """Equilibrate at the cycle's initial control values.

    Returns (state, x_r, T_1) to use as the main run's initial condition.
    """
    hold = DriveCycle(
        t=np.array([0.0, seconds]),
        channels={kclass: np.full(2, v[0]) for kclass, v in cycle.channels.items()},
        seed=cycle.seed,
        provenance="settle",
    )
    # Integrate the hold period in one output step chunk.
    ds = integrate(
        hold, k, params, ambient, default_initial_state(cycle),
        dt_sim=dt_sim, dt_out=seconds, backend=backend,
        meta={"purpose": "settle"},
    )
    state = np.array([ds.channels[c][-1] for c in
                      ("p_im", "p_em", "omega_t", "u_egr1_t", "u_egr2_t", "u_vgt_t")])
    return state, float(ds.channels["x_r"][-1]), float(ds.channels["T_1"][-1])
