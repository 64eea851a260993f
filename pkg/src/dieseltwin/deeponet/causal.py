"""Causal history-matrix assembly for windowed operator learning.

Each 60 s window at 0.2 s sampling yields 301 rows; row j holds the input
history up to t_j in reverse order, zero-padded: [u(t_j), u(t_{j-1}), ...,
u(t_0), 0, ..., 0].  Causality is structural: row j never sees samples
after t_j.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import toeplitz

__all__ = [
    "WINDOW_SECONDS",
    "WINDOW_DT",
    "WINDOW_POINTS",
    "causal_history_matrix",
    "assemble_causal_inputs",
    "trunk_grid",
]

WINDOW_SECONDS = 60.0
WINDOW_DT = 0.2
WINDOW_POINTS = 301


def causal_history_matrix(u_d: np.ndarray) -> np.ndarray:
    """Reversed, zero-padded history matrix of a sampled input channel."""
    u_d = np.asarray(u_d, dtype=float)
    if u_d.ndim != 1 or u_d.size != WINDOW_POINTS:
        raise ValueError(f"expected {WINDOW_POINTS} samples, got {u_d.shape}")
    first_row = np.zeros(WINDOW_POINTS)
    first_row[0] = u_d[0]
    return toeplitz(u_d, first_row)


def trunk_grid() -> np.ndarray:
    """Window times 0..60 s scaled to [-1, 1], shape (301, 1)."""
    t = np.arange(WINDOW_POINTS) * WINDOW_DT
    return (2.0 * t / WINDOW_SECONDS - 1.0).reshape(-1, 1)


def assemble_causal_inputs(u_d: np.ndarray, initial_conditions):
    """History matrix, trunk grid, and initial-condition vector for a window."""
    H = causal_history_matrix(u_d)
    ics = np.atleast_1d(np.asarray(initial_conditions, dtype=float))
    return H, trunk_grid(), ics
