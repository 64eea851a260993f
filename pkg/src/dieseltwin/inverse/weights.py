"""Trainable per-point loss weights updated by gradient ascent."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..nn import tape as bk
from .problem import InverseProblem

__all__ = ["SelfAdaptiveWeights", "ALPHA"]

# Initialization multipliers for the per-point data weights.
ALPHA = {"p_em": 1e3, "p_im": 1e3, "omega_t": 1e3, "W_egr": 2e3}


@dataclass
class SelfAdaptiveWeights:
    """Raw (pre-softplus) weights; the mask keeps effective weights positive.

    Vector weights cover the four per-point data channels; the manifold
    temperature and intake-close temperature carry scalar weights.
    """

    lam_pim: np.ndarray
    lam_pem: np.ndarray
    lam_omega: np.ndarray
    lam_wegr: np.ndarray
    lam_Tem: np.ndarray
    lam_T1: np.ndarray
    frozen: bool = False

    GROUPS = ("lam_pim", "lam_pem", "lam_omega", "lam_wegr", "lam_Tem", "lam_T1")

    @classmethod
    def initialize(
        cls, problem: InverseProblem, rng: np.random.Generator, temp_mean: float = 1500.0
    ) -> "SelfAdaptiveWeights":
        """Gaussian init: per-point mean alpha * X / max(X), scalars at temp_mean."""
        def vec(ch):
            x = problem.data[ch]
            m = float(np.max(x))
            if m <= 0.0:
                m = 1.0
            return ALPHA[ch] * x / m + 0.1 * rng.standard_normal(x.shape)

        return cls(
            lam_pim=vec("p_im"),
            lam_pem=vec("p_em"),
            lam_omega=vec("omega_t"),
            lam_wegr=vec("W_egr"),
            lam_Tem=np.array([temp_mean + 0.1 * rng.standard_normal()]),
            lam_T1=np.array([temp_mean + 0.1 * rng.standard_normal()]),
        )

    def arrays(self):
        return [getattr(self, name) for name in self.GROUPS]

    def traced(self) -> "SelfAdaptiveWeights":
        """A view with each group wrapped as a trainable tape variable."""
        wrapped = {
            name: bk.Var(getattr(self, name), requires_grad=True)
            for name in self.GROUPS
        }
        return SelfAdaptiveWeights(**wrapped, frozen=self.frozen)

    def effective(self) -> dict:
        """Masked (softplus) weight values, for reports."""
        return {
            name: np.logaddexp(0.0, np.asarray(bk.value_of(getattr(self, name))))
            for name in self.GROUPS
        }
