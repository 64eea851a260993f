"""Ensembles of independent estimation runs and their summaries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..constants import PARAM_NAMES

__all__ = ["EnsembleResult", "ensemble_run", "summarize_estimates"]

QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


@dataclass
class EnsembleResult:
    estimates: np.ndarray          # (n_ok, 4) normalized estimates
    seconds: np.ndarray            # per successful run
    seeds_ok: list
    failures: list                 # (seed, reason)
    summary: dict = field(default_factory=dict)

    @property
    def n_runs(self) -> int:
        return len(self.seeds_ok) + len(self.failures)


def summarize_estimates(estimates: np.ndarray) -> dict:
    """Per-parameter mean/std/min/max/quantiles."""
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    out = {}
    for j, name in enumerate(PARAM_NAMES):
        col = estimates[:, j]
        entry = {
            "mean": float(col.mean()),
            "std": float(col.std(ddof=1)) if col.size > 1 else 0.0,
            "min": float(col.min()),
            "max": float(col.max()),
        }
        for q in QUANTILES:
            entry[f"q{int(q * 100):02d}"] = float(np.quantile(col, q))
        out[name] = entry
    return out


def ensemble_run(run_fn, seeds, on_result=None) -> EnsembleResult:
    """Run ``run_fn(seed)`` per seed, tolerating individual failures.

    Aborted members are recorded with their reason and excluded from the
    summary; the count is preserved so reports can flag them.
    """
    estimates, seconds, seeds_ok, failures = [], [], [], []
    for seed in seeds:
        try:
            result = run_fn(int(seed))
        except Exception as exc:  # member failure must not kill the ensemble
            failures.append((int(seed), f"{type(exc).__name__}: {exc}"))
            continue
        estimates.append(result.estimate)
        seconds.append(result.seconds)
        seeds_ok.append(int(seed))
        if on_result is not None:
            on_result(int(seed), result)
    estimates = np.array(estimates) if estimates else np.empty((0, len(PARAM_NAMES)))
    res = EnsembleResult(
        estimates=estimates,
        seconds=np.asarray(seconds),
        seeds_ok=seeds_ok,
        failures=failures,
    )
    if len(seeds_ok):
        res.summary = summarize_estimates(estimates)
    return res
