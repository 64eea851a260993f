"""Uniformly sampled channel bundles with CSV + JSON-sidecar persistence."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["TimeSeriesDataset", "SEGMENT_SECONDS"]

SEGMENT_SECONDS = 60.0


@dataclass
class TimeSeriesDataset:
    """Channels sharing one uniform time grid.

    ``meta`` carries provenance: case id, seed, normalized parameter values,
    applied noise fractions, ambient conditions, and the config hash when
    produced by the CLI.
    """

    t: np.ndarray
    channels: dict
    dt: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        n = self.t.size
        for name, values in self.channels.items():
            values = np.asarray(values, dtype=float)
            if values.size != n:
                raise ValueError(f"channel {name!r} length {values.size} != grid {n}")
            self.channels[name] = values

    def __len__(self) -> int:
        return self.t.size

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    @property
    def n_segments(self) -> int:
        return int(np.floor(self.duration / SEGMENT_SECONDS + 1e-9))

    def segment(self, index: int, seconds: float = SEGMENT_SECONDS) -> "TimeSeriesDataset":
        """Window ``index`` of the given length, grid rebased to start at 0."""
        start = index * seconds
        per = int(round(seconds / self.dt))
        i0 = int(round(start / self.dt))
        if i0 + per >= self.t.size:
            raise IndexError(f"segment {index} out of range")
        sl = slice(i0, i0 + per + 1)
        meta = dict(self.meta)
        meta["segment_index"] = index
        return TimeSeriesDataset(
            t=self.t[sl] - self.t[i0],
            channels={k: v[sl].copy() for k, v in self.channels.items()},
            dt=self.dt,
            meta=meta,
        )

    def window_starting(self, start_index: int, n_points: int) -> "TimeSeriesDataset":
        """Arbitrary-offset window of ``n_points`` samples (for augmentation)."""
        sl = slice(start_index, start_index + n_points)
        if start_index + n_points > self.t.size:
            raise IndexError("window exceeds dataset")
        return TimeSeriesDataset(
            t=self.t[sl] - self.t[start_index],
            channels={k: v[sl].copy() for k, v in self.channels.items()},
            dt=self.dt,
            meta=dict(self.meta),
        )

    def resample(self, dt_out: float) -> "TimeSeriesDataset":
        """Decimate to a coarser grid; dt_out must be a multiple of dt."""
        stride = dt_out / self.dt
        if abs(stride - round(stride)) > 1e-9:
            raise ValueError("dt_out must be an integer multiple of dt")
        stride = int(round(stride))
        return TimeSeriesDataset(
            t=self.t[::stride].copy(),
            channels={k: v[::stride].copy() for k, v in self.channels.items()},
            dt=dt_out,
            meta=dict(self.meta),
        )

    def copy(self) -> "TimeSeriesDataset":
        return TimeSeriesDataset(
            t=self.t.copy(),
            channels={k: v.copy() for k, v in self.channels.items()},
            dt=self.dt,
            meta=json.loads(json.dumps(self.meta)),
        )

    # -- persistence -----------------------------------------------------

    def save(self, path) -> None:
        """Write ``<path>`` as CSV (17 significant digits) plus ``.json`` sidecar."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        names = list(self.channels)
        data = np.column_stack([self.t] + [self.channels[n] for n in names])
        header = ",".join(["t"] + names)
        np.savetxt(path, data, fmt="%.17g", delimiter=",", header=header, comments="")
        sidecar = {"dt": self.dt, "channels": names, "meta": self.meta}
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "TimeSeriesDataset":
        path = Path(path)
        sidecar = json.loads(path.with_suffix(".json").read_text())
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        names = sidecar["channels"]
        channels = {n: data[:, i + 1] for i, n in enumerate(names)}
        return cls(t=data[:, 0], channels=channels, dt=float(sidecar["dt"]), meta=sidecar["meta"])
