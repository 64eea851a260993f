"""Baseline hybrid inverse training: min-max over networks, parameters, weights.

Descent (Adam) on the state networks and the masked unknown parameters;
ascent on the self-adaptive weights until their freeze epoch.  Every
parameter group gets its own optimizer: one for the networks, one for the
unknowns, and one per weight group.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..constants import LAB_PARAMS_NORMALIZED, PARAM_MASKS, PARAM_NAMES, UnknownParams
from ..nn import Adam, DenseNetSpec, OutputSpec, PiecewiseConstant, forward, forward_with_input_derivative, init_params
from ..nn import tape as bk
from .problem import NET_LAYOUT, InverseProblem
from .residuals import physics_residuals, total_loss
from .weights import SelfAdaptiveWeights

__all__ = [
    "NonFiniteLoss",
    "TrainResult",
    "net_specs",
    "init_inverse",
    "evaluate_states",
    "train_baseline",
    "predict_all",
    "descent_schedule",
]


class NonFiniteLoss(RuntimeError):
    def __init__(self, epoch: int, components):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch
        self.components = components


@dataclass
class TrainResult:
    net_params: dict
    latents: np.ndarray
    weights: SelfAdaptiveWeights
    lam_trajectory: np.ndarray      # (epochs, 4) masked (normalized) values
    loss_history: list
    epochs: int
    seconds: float
    meta: dict = field(default_factory=dict)

    @property
    def estimate(self) -> np.ndarray:
        """Final normalized parameter estimate."""
        return self.lam_trajectory[-1]


def net_specs() -> dict:
    return {
        name: DenseNetSpec(widths, OutputSpec(*out))
        for name, (widths, out, _) in NET_LAYOUT.items()
    }


def _inverse_transform(out: OutputSpec, y: float) -> float:
    v = y / out.scale - out.shift
    if out.kind == "softplus":
        v = max(v, 1e-9)
        return float(np.log(np.expm1(v))) if v < 30 else v
    if out.kind == "sigmoid":
        v = min(max(v, 1e-9), 1 - 1e-9)
        return float(np.log(v / (1 - v)))
    return float(v)


def init_inverse(
    problem: InverseProblem,
    seed: int,
    lam_temp_mean: float = 1500.0,
    param_sigma: float = 0.2,
    bias_at_initial: bool = True,
):
    """Networks, unknown-parameter latents, and self-adaptive weights.

    Parameter latents are drawn so the masked values are Gaussian around
    the design (laboratory) values: initialization never peeks at the
    field truth.  With ``bias_at_initial``, each state network's output
    bias starts at the (known) initial condition, which keeps bounded
    output transforms out of their flat tails from the first epoch.
    """
    rng = np.random.default_rng(seed)
    specs = net_specs()
    params = {name: init_params(spec, rng) for name, spec in specs.items()}
    if bias_at_initial:
        for name, (_, _, channels) in NET_LAYOUT.items():
            b = params[name][-1][1]
            for j, ch in enumerate(channels):
                b[j] = _inverse_transform(specs[name].output, problem.initial[ch])
    masked0 = np.maximum(
        np.asarray(LAB_PARAMS_NORMALIZED) + param_sigma * rng.standard_normal(4), 0.05
    )
    latents = UnknownParams.from_normalized(masked0).latents
    weights = SelfAdaptiveWeights.initialize(problem, rng, temp_mean=lam_temp_mean)
    return params, latents, weights


def evaluate_states(vparams: dict, problem: InverseProblem) -> dict:
    """State trajectories (and time derivatives where used) from the nets."""
    specs = net_specs()
    t = problem.t_norm
    seed = problem.tangent_seed
    y1, dy1 = forward_with_input_derivative(vparams["n1"], specs["n1"], t, seed)
    y4, dy4 = forward_with_input_derivative(vparams["n4"], specs["n4"], t, seed)
    x_r = forward(vparams["n2"], specs["n2"], t)
    T_1 = forward(vparams["n3"], specs["n3"], t)
    return {
        "p_im": y1[:, 0],
        "p_em": y1[:, 1],
        "dp_im": dy1[:, 0],
        "dp_em": dy1[:, 1],
        "omega_t": y4[:, 0],
        "domega_t": dy4[:, 0],
        "x_r": x_r[:, 0],
        "T_1": T_1[:, 0],
    }


def descent_schedule(lr: float, epochs: int) -> PiecewiseConstant:
    return PiecewiseConstant.fractions([lr, lr / 2.0, lr / 10.0], [0.5, 0.85], epochs)


def _wrap_nets(net_params):
    return {
        name: [
            (bk.Var(W, requires_grad=True), bk.Var(b, requires_grad=True))
            for W, b in layers
        ]
        for name, layers in net_params.items()
    }


def _net_grads(vnets):
    flat, grads = [], []
    for layers in vnets.values():
        for W, b in layers:
            flat += [W.value, b.value]
            grads += [
                W.grad if W.grad is not None else np.zeros_like(W.value),
                b.grad if b.grad is not None else np.zeros_like(b.value),
            ]
    return flat, grads


def precomputed_f_egr(problem: InverseProblem):
    """f_egr depends only on frozen actuator trajectories; evaluate once."""
    return np.maximum(
        np.asarray(bk.value_of(problem.empiricals.f_egr(problem.u_egr_tilde))), 0.0
    )


def train_baseline(
    problem: InverseProblem,
    seed: int,
    epochs: int = 80_000,
    lam_freeze: int | None = None,
    lr: float = 1e-3,
    lam_lr: float = 1e-3,
    lam_temp_mean: float = 1500.0,
    temp_net_lr_factor: float = 0.2,
    temp_net_warmup: float = 0.1,
    record_loss_every: int = 200,
) -> TrainResult:
    """Two-phase min-max training of the full hybrid model.

    The residual-fraction and intake-temperature nets are held at their
    initial (IC-anchored) outputs for the first ``temp_net_warmup``
    fraction of the budget and then train at a reduced rate: while the
    data misfits are still large, their cheapest descent direction runs
    through the temperature chain and locks x_r into a spurious
    combustionless branch (x_r -> 1, inflated T_1) that the residual
    terms cannot undo within the budget.
    """
    if lam_freeze is None:
        lam_freeze = int(0.6 * epochs)
    warmup = int(temp_net_warmup * epochs)
    net_params, latents, weights = init_inverse(problem, seed, lam_temp_mean)
    f_egr = precomputed_f_egr(problem)

    sched = descent_schedule(lr, epochs)
    opt_nets = Adam(lr=sched)
    opt_temp = Adam(lr=descent_schedule(lr * temp_net_lr_factor, epochs))
    opt_lam = Adam(lr=sched)
    opt_weights = {name: Adam(lr=lam_lr, ascent=True) for name in SelfAdaptiveWeights.GROUPS}

    lam_traj = np.empty((epochs, len(PARAM_NAMES)))
    history = []
    t0 = time.perf_counter()
    for epoch in range(epochs):
        ascending = epoch < lam_freeze
        vnets = _wrap_nets(net_params)
        vlat = bk.Var(latents, requires_grad=True)
        w = weights.traced() if ascending else weights
        states = evaluate_states(vnets, problem)
        loss, comps = total_loss(states, vlat, w, problem, f_egr=f_egr)
        if not np.isfinite(comps["total"]):
            raise NonFiniteLoss(epoch, comps)
        bk.backward(loss)

        fast = {k: v for k, v in vnets.items() if k in ("n1", "n4")}
        temp = {k: v for k, v in vnets.items() if k in ("n2", "n3")}
        flat, grads = _net_grads(fast)
        opt_nets.step(flat, grads)
        if epoch >= warmup:
            flat, grads = _net_grads(temp)
            opt_temp.step(flat, grads)
        opt_lam.step([latents], [vlat.grad])
        if ascending:
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
        meta={"seed": seed, "lam_freeze": lam_freeze, "method": "baseline"},
    )


def _normalized(latents) -> np.ndarray:
    return UnknownParams(np.asarray(latents, dtype=float).copy()).normalized()


def predict_all(net_params: dict, latents, problem: InverseProblem) -> dict:
    """Full physical-unit trajectory bundle on the residual grid."""
    states = evaluate_states(net_params, problem)
    residuals, inter = physics_residuals(states, latents, problem)
    bundle = {"t": problem.t.copy()}
    for ch in ("p_im", "p_em", "omega_t", "x_r", "T_1"):
        bundle[ch] = np.asarray(bk.value_of(states[ch]))
    for ch, v in inter.items():
        bundle[ch] = np.broadcast_to(np.asarray(bk.value_of(v)), problem.t.shape).copy()
    for ch, v in residuals.items():
        bundle["residual_" + ch] = np.asarray(bk.value_of(v))
    for ch, v in problem.actuators.items():
        bundle[ch] = v.copy()
    return bundle


def minmax_scaled(bundle: dict) -> dict:
    """Report-layer 0-1 scaling of a trajectory bundle, channel-wise."""
    out = {}
    for ch, v in bundle.items():
        if ch == "t":
            out[ch] = v.copy()
            continue
        lo, hi = float(np.min(v)), float(np.max(v))
        out[ch] = (v - lo) / (hi - lo) if hi > lo else np.zeros_like(v)
    return out
