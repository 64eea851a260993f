"""Synthetic drive-cycle generation.

Cycles are smoothed random step signals per control channel, with optional
idle windows (low speed / low fuel) mimicking real duty cycles.  The same
seed always yields the same cycle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["CycleProfile", "DriveCycle", "synthesize_drive_cycle", "smooth_cycle"]

CYCLE_DT = 0.05

DEFAULT_RANGES = {
    "u_delta": (5.0, 80.0),
    "u_egr": (10.0, 80.0),
    "u_vgt": (30.0, 85.0),
    "n_e": (650.0, 1800.0),
}

IDLE_VALUES = {"u_delta": 8.0, "u_egr": 60.0, "u_vgt": 70.0, "n_e": 650.0}


@dataclass(frozen=True)
class CycleProfile:
    """Shape of the synthesized cycle.

    ``step_density`` is the expected number of level changes per minute
    (0 means constant channels at the range midpoints); ``smooth_tau`` is
    the first-order filter time constant applied to the raw steps.
    """

    ranges: dict = field(default_factory=lambda: dict(DEFAULT_RANGES))
    step_density: float = 6.0
    smooth_tau: float = 1.5
    idle_fraction: float = 0.0
    idle_values: dict = field(default_factory=lambda: dict(IDLE_VALUES))

    def __post_init__(self):
        for name, (lo, hi) in self.ranges.items():
            if not hi > lo:
                raise ValueError(f"degenerate range for {name!r}: ({lo}, {hi})")
        if self.step_density < 0 or not 0.0 <= self.idle_fraction < 1.0:
            raise ValueError("step_density must be >= 0 and idle_fraction in [0, 1)")


@dataclass
class DriveCycle:
    """Uniformly sampled control channels (u_delta, u_egr, u_vgt, n_e)."""

    t: np.ndarray
    channels: dict
    seed: int | None = None
    provenance: str = "synthetic"

    @property
    def duration(self) -> float:
        return float(self.t[-1])

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def sample(self, name: str, times):
        """Channel value at arbitrary times (linear interpolation, edge-held)."""
        return np.interp(times, self.t, self.channels[name])


def _step_signal(rng, t, lo, hi, n_steps, tau):
    if n_steps <= 0:
        raw = np.full(t.shape, 0.5 * (lo + hi))
    else:
        # Random levels on a jittered grid of change points.
        times = np.sort(rng.uniform(0.0, t[-1], size=n_steps))
        levels = rng.uniform(lo, hi, size=n_steps + 1)
        raw = levels[np.searchsorted(times, t, side="right")]
    if tau <= 0:
        return raw
    dt = t[1] - t[0]
    alpha = dt / (tau + dt)
    out = np.empty_like(raw)
    out[0] = raw[0]
    for i in range(1, len(raw)):
        out[i] = out[i - 1] + alpha * (raw[i] - out[i - 1])
    return out


def synthesize_drive_cycle(
    seed: int, duration: float, profile: CycleProfile | None = None
) -> DriveCycle:
    """Generate a drive cycle of ``duration`` seconds (multiple of 60)."""
    if duration <= 0 or abs(duration / 60.0 - round(duration / 60.0)) > 1e-9:
        raise ValueError("duration must be a positive multiple of 60 s")
    profile = profile or CycleProfile()
    rng = np.random.default_rng(seed)
    n = int(round(duration / CYCLE_DT))
    t = np.arange(n + 1) * CYCLE_DT
    n_steps = int(round(profile.step_density * duration / 60.0))
    channels = {}
    for name, (lo, hi) in profile.ranges.items():
        channels[name] = _step_signal(rng, t, lo, hi, n_steps, profile.smooth_tau)

    if profile.idle_fraction > 0.0:
        # One contiguous idle window per cycle, placed away from the edges.
        width = profile.idle_fraction * duration
        start = rng.uniform(0.1 * duration, 0.9 * duration - width)
        mask = (t >= start) & (t < start + width)
        ramp = np.ones(n + 1)
        if profile.smooth_tau > 0:
            edge = max(int(profile.smooth_tau / CYCLE_DT), 1)
            kernel = np.ones(edge) / edge
            ramp = np.convolve(mask.astype(float), kernel, mode="same")
        else:
            ramp = mask.astype(float)
        ramp = np.clip(ramp, 0.0, 1.0)
        for name in channels:
            idle = profile.idle_values.get(name)
            if idle is not None:
                channels[name] = channels[name] * (1 - ramp) + idle * ramp

    for name, (lo, hi) in profile.ranges.items():
        lo_eff = min(lo, profile.idle_values.get(name, lo))
        hi_eff = max(hi, profile.idle_values.get(name, hi))
        channels[name] = np.clip(channels[name], lo_eff, hi_eff)
    return DriveCycle(t=t, channels=channels, seed=seed)


def smooth_cycle(duration: float, amplitude: float = 0.35, dt: float = CYCLE_DT) -> DriveCycle:
    """Analytic C-infinity cycle (sine mixtures); used by convergence studies.

    The stored samples are linear interpolants of the analytic signal, so
    convergence studies should use integration steps that divide ``dt`` to
    keep the interpolation kinks on step boundaries.
    """
    n = int(round(duration / dt))
    t = np.arange(n + 1) * dt
    mids = {k: 0.5 * (lo + hi) for k, (lo, hi) in DEFAULT_RANGES.items()}
    spans = {k: 0.5 * (hi - lo) * amplitude for k, (lo, hi) in DEFAULT_RANGES.items()}
    freqs = {"u_delta": 0.11, "u_egr": 0.07, "u_vgt": 0.05, "n_e": 0.03}
    channels = {
        k: mids[k]
        + spans[k] * np.sin(2 * np.pi * freqs[k] * t)
        + 0.3 * spans[k] * np.sin(2 * np.pi * 2.7 * freqs[k] * t + 1.0)
        for k in mids
    }
    return DriveCycle(t=t, channels=channels, seed=None, provenance="analytic")
