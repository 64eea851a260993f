"""Multiplicative Gaussian measurement noise."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import TimeSeriesDataset

__all__ = ["NoiseSpec", "PAPER_NOISE", "NO_NOISE", "add_noise"]


@dataclass(frozen=True)
class NoiseSpec:
    """Relative noise std per channel, e.g. {"p_im": 0.03}."""

    fractions: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, frac in self.fractions.items():
            if frac < 0.0:
                raise ValueError(f"negative noise fraction for {name!r}")


# Measured-output noise levels: p_im, p_em 3%; omega_t 1%; W_egr 5%; T_em 3%.
PAPER_NOISE = NoiseSpec(
    {"p_im": 0.03, "p_em": 0.03, "omega_t": 0.01, "W_egr": 0.05, "T_em": 0.03}
)
NO_NOISE = NoiseSpec({})


def add_noise(ds: TimeSeriesDataset, spec: NoiseSpec, seed: int) -> TimeSeriesDataset:
    """Return a copy with x*(1 + p*eps), eps ~ N(0,1) i.i.d. per sample.

    The clean series is preserved alongside as ``<name>_clean``.
    """
    out = ds.copy()
    rng = np.random.default_rng(seed)
    for name in spec.fractions:
        if name not in out.channels:
            raise KeyError(f"channel {name!r} not in dataset")
    for name, frac in spec.fractions.items():
        clean = out.channels[name]
        out.channels[name + "_clean"] = clean.copy()
        eps = rng.standard_normal(clean.shape)
        out.channels[name] = clean * (1.0 + frac * eps)
    out.meta["noise"] = {"fractions": dict(spec.fractions), "seed": seed}
    return out
