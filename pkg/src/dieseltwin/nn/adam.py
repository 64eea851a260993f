"""Adam with bias correction, shared by every training loop in the package."""

from __future__ import annotations

import numpy as np

__all__ = ["Adam", "PiecewiseConstant"]


class PiecewiseConstant:
    """Step-indexed piecewise-constant schedule.

    ``boundaries`` are the step counts at which the rate switches to the
    next entry of ``values`` (len(values) == len(boundaries) + 1).
    """

    def __init__(self, values, boundaries=()):
        values = [float(v) for v in np.atleast_1d(values)]
        boundaries = [int(b) for b in boundaries]
        if len(values) != len(boundaries) + 1:
            raise ValueError("need one more value than boundaries")
        if sorted(boundaries) != boundaries:
            raise ValueError("boundaries must be ascending")
        self.values = values
        self.boundaries = boundaries

    def __call__(self, step: int) -> float:
        i = int(np.searchsorted(self.boundaries, step, side="right"))
        return self.values[i]

    @classmethod
    def fractions(cls, values, fracs, total: int):
        """Schedule switching at the given fractions of a total budget."""
        return cls(values, [int(f * total) for f in fracs])


class Adam:
    """Standard Adam; ``ascent=True`` flips the update for max steps."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, ascent=False):
        self.lr = lr if callable(lr) else PiecewiseConstant([lr])
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.sign = +1.0 if ascent else -1.0
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        """Update ``params`` (list of ndarrays) in place from ``grads``."""
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        lr = self.lr(self.t - 1)
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            g = np.asarray(g)
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * np.square(g)
            p += self.sign * lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
