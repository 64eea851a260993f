"""Multi-stage transfer across time segments with progressive freezing.

Segment 1 trains fully (the baseline); later segments start from its
network parameters and estimate, with fresh self-adaptive weights, and run
a three-stage schedule: all parameters, then last layers only, then last
layers with frozen weights.
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass

import numpy as np

from ..constants import PARAM_NAMES
from ..nn import Adam
from ..nn import tape as bk
from ..inverse.problem import InverseProblem
from ..inverse.residuals import total_loss
from ..inverse.training import (
    NonFiniteLoss,
    TrainResult,
    descent_schedule,
    evaluate_states,
    precomputed_f_egr,
    _net_grads,
    _normalized,
)
from ..inverse.weights import SelfAdaptiveWeights

__all__ = ["StageSchedule", "multistage_train_segment"]


@dataclass(frozen=True)
class StageSchedule:
    """Contiguous stage boundaries in epochs.

    Stage I trains everything; Stage II freezes hidden layers; Stage III
    additionally freezes the self-adaptive weights.
    """

    stage1_end: int = 20_000
    stage2_end: int = 30_000
    total: int = 35_000

    def __post_init__(self):
        if not 0 < self.stage1_end <= self.stage2_end <= self.total:
            raise ValueError("stages must be contiguous and ordered")

    def scaled(self, factor: float) -> "StageSchedule":
        return StageSchedule(
            int(self.stage1_end * factor),
            int(self.stage2_end * factor),
            int(self.total * factor),
        )

    def stage(self, epoch: int) -> int:
        if epoch < self.stage1_end:
            return 1
        if epoch < self.stage2_end:
            return 2
        return 3


def _wrap_stage(net_params, full: bool):
    """Trace all layers (stage I) or only the last layer of each net."""
    wrapped = {}
    for name, layers in net_params.items():
        out = []
        for i, (W, b) in enumerate(layers):
            trainable = full or i == len(layers) - 1
            out.append(
                (bk.Var(W, requires_grad=trainable), bk.Var(b, requires_grad=trainable))
            )
        wrapped[name] = out
    return wrapped


def _last_layer_grads(vnets):
    flat, grads = [], []
    for layers in vnets.values():
        W, b = layers[-1]
        flat += [W.value, b.value]
        grads += [
            W.grad if W.grad is not None else np.zeros_like(W.value),
            b.grad if b.grad is not None else np.zeros_like(b.value),
        ]
    return flat, grads


def multistage_train_segment(
    problem: InverseProblem,
    source: TrainResult,
    seed: int,
    schedule: StageSchedule = StageSchedule(),
    lr: float = 1e-3,
    lam_lr: float = 1e-3,
    lam_temp_mean: float = 1500.0,
    record_loss_every: int = 200,
) -> TrainResult:
    """Train one later segment from a trained source model."""
    if source is None or source.net_params is None:
        raise ValueError("multistage training requires a trained source model")
    net_params = copy.deepcopy(source.net_params)
    latents = source.latents.copy()
    rng = np.random.default_rng(seed)
    weights = SelfAdaptiveWeights.initialize(problem, rng, temp_mean=lam_temp_mean)
    f_egr = precomputed_f_egr(problem)

    epochs = schedule.total
    sched = descent_schedule(lr, epochs)
    opt_all = Adam(lr=sched)
    opt_last = Adam(lr=sched)
    opt_lam = Adam(lr=sched)
    opt_weights = {name: Adam(lr=lam_lr, ascent=True) for name in SelfAdaptiveWeights.GROUPS}

    lam_traj = np.empty((epochs, len(PARAM_NAMES)))
    history = []
    t0 = time.perf_counter()
    for epoch in range(epochs):
        stage = schedule.stage(epoch)
        vnets = _wrap_stage(net_params, full=stage == 1)
        vlat = bk.Var(latents, requires_grad=True)
        w = weights.traced() if stage < 3 else weights
        states = evaluate_states(vnets, problem)
        loss, comps = total_loss(states, vlat, w, problem, f_egr=f_egr)
        if not np.isfinite(comps["total"]):
            raise NonFiniteLoss(epoch, comps)
        bk.backward(loss)
        if stage == 1:
            flat, grads = _net_grads(vnets)
            opt_all.step(flat, grads)
        else:
            flat, grads = _last_layer_grads(vnets)
            opt_last.step(flat, grads)
        opt_lam.step([latents], [vlat.grad])
        if stage < 3:
            for name in SelfAdaptiveWeights.GROUPS:
                var = getattr(w, name)
                g = var.grad if var.grad is not None else np.zeros_like(var.value)
                opt_weights[name].step([getattr(weights, name)], [g])
        lam_traj[epoch] = _normalized(latents)
        if epoch % record_loss_every == 0 or epoch == epochs - 1:
            history.append((epoch, comps))
    weights.frozen = True
    seconds = time.perf_counter() - t0

    return TrainResult(
        net_params=net_params,
        latents=latents,
        weights=weights,
        lam_trajectory=lam_traj,
        loss_history=history,
        epochs=epochs,
        seconds=seconds,
        meta={
            "seed": seed,
            "method": "multistage",
            "schedule": [schedule.stage1_end, schedule.stage2_end, schedule.total],
        },
    )
