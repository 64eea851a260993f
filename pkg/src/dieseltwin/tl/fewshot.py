"""Few-shot transfer: offline multi-head bodies, head-only fine-tuning.

Phase I trains wide multi-head networks on laboratory windows (pure data
fitting, one head per window).  Phase II freezes the body, computes the
hidden time-derivative matrix once, and optimizes only fresh single-output
heads, the unknown parameters, and the self-adaptive weights; the output
derivative is assembled by the chain rule from the cached matrices, so no
differentiation through the body happens inside the loop.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field

import numpy as np

from ..constants import LAB_PARAMS_NORMALIZED, PARAM_NAMES, UnknownParams
from ..nn import (
    Adam,
    DenseNetSpec,
    OutputSpec,
    body_features,
    forward,
    init_params,
    load_checkpoint,
    output_and_derivative,
    save_checkpoint,
)
from ..nn import tape as bk
from ..inverse.problem import CHANNEL_SCALES, NET_LAYOUT, InverseProblem
from ..inverse.residuals import total_loss
from ..inverse.training import (
    NonFiniteLoss,
    TrainResult,
    descent_schedule,
    precomputed_f_egr,
    _normalized,
)
from ..inverse.weights import SelfAdaptiveWeights

__all__ = [
    "MULTIHEAD_HIDDEN",
    "MultiHeadBody",
    "collect_head_windows",
    "multihead_offline_train",
    "hidden_derivative_matrices",
    "fewshot_train",
]

# Hidden widths of the shared bodies (last entry is the feature width the
# heads consume).
MULTIHEAD_HIDDEN = {
    "n1": (250, 250, 250, 125),
    "n2": (170, 170, 170, 50),
    "n3": (50, 50, 20),
    "n4": (120, 120, 70),
}


def _body_spec(name: str, head_count: int) -> DenseNetSpec:
    widths, out, channels = NET_LAYOUT[name]
    hidden = MULTIHEAD_HIDDEN[name]
    return DenseNetSpec((1, *hidden, head_count * len(channels)), OutputSpec(*out))


@dataclass
class MultiHeadBody:
    """Trained shared bodies for the four state networks."""

    head_count: int
    params: dict = field(default_factory=dict)   # name -> list[(W, b)]
    rel_l2: dict = field(default_factory=dict)   # variable -> training error
    trained: bool = False

    def spec(self, name: str) -> DenseNetSpec:
        return _body_spec(name, self.head_count)

    def feature_width(self, name: str) -> int:
        return MULTIHEAD_HIDDEN[name][-1]

    def save(self, directory) -> None:
        from pathlib import Path

        directory = Path(directory)
        for name, layers in self.params.items():
            arrays = [a for Wb in layers for a in Wb]
            manifest = {
                "net": name,
                "head_count": self.head_count,
                "widths": list(self.spec(name).widths),
                "rel_l2": self.rel_l2,
            }
            save_checkpoint(directory / f"multihead_{name}", manifest, arrays)

    @classmethod
    def load(cls, directory) -> "MultiHeadBody":
        from pathlib import Path

        directory = Path(directory)
        body = cls(head_count=0)
        for name in NET_LAYOUT:
            manifest, arrays = load_checkpoint(directory / f"multihead_{name}")
            body.head_count = manifest["head_count"]
            body.params[name] = [
                (arrays[i], arrays[i + 1]) for i in range(0, len(arrays), 2)
            ]
            body.rel_l2 = manifest.get("rel_l2", {})
        body.trained = True
        return body


def collect_head_windows(datasets, head_count: int):
    """One 60 s window per head, split evenly across the given lab cases."""
    if head_count < 1:
        raise ValueError("need at least one head")
    per = head_count // len(datasets)
    extra = head_count - per * len(datasets)
    windows = []
    for i, ds in enumerate(datasets):
        n = per + (1 if i < extra else 0)
        if ds.n_segments < n:
            raise ValueError(
                f"dataset {ds.meta.get('case_id')} has {ds.n_segments} segments, needs {n}"
            )
        windows += [ds.segment(j) for j in range(n)]
    return windows


def multihead_offline_train(
    windows,
    seed: int = 0,
    epochs: int = 100_000,
    lr: float = 1e-3,
    patience: int = 10_000,
    head_count: int | None = None,
) -> MultiHeadBody:
    """Phase I: fit every head to its window by channel-normalized MSE.

    The two outputs of the pressure net are weighted equally after channel
    scaling.  The wide output layer is initialized with the sigma =
    sqrt(10/(fan_in+fan_out)) policy; training stops early on plateau.
    """
    head_count = head_count or len(windows)
    if head_count != len(windows):
        raise ValueError(f"{len(windows)} windows for {head_count} heads")
    rng = np.random.default_rng(seed)
    t = windows[0].t - windows[0].t[0]
    duration = float(t[-1])
    t_norm = (2.0 * t / duration - 1.0).reshape(-1, 1)

    body = MultiHeadBody(head_count=head_count)
    for name, (_, out, channels) in NET_LAYOUT.items():
        spec = _body_spec(name, head_count)
        scale = spec.output.scale
        # Column blocks per variable: [var0 x heads | var1 x heads].
        labels = np.concatenate(
            [
                np.column_stack([w.channels[ch] for w in windows]) / scale
                for ch in channels
            ],
            axis=1,
        )
        params = init_params(spec, rng, last_layer_sigma10=True)
        opt = Adam(lr=descent_schedule(lr, epochs))
        best, best_epoch, best_params = np.inf, 0, params
        denom = np.linalg.norm(labels, axis=0)
        for epoch in range(epochs):
            vparams = [
                (bk.Var(W, requires_grad=True), bk.Var(b, requires_grad=True))
                for W, b in params
            ]
            pred = forward(vparams, spec, t_norm)
            loss = bk.vmean(bk.square(pred / scale - labels))
            if not np.isfinite(loss.value):
                raise RuntimeError(f"multihead body {name!r} diverged at epoch {epoch}")
            bk.backward(loss)
            flat, grads = [], []
            for W, b in vparams:
                flat += [W.value, b.value]
                grads += [W.grad, b.grad]
            opt.step(flat, grads)
            if epoch % 500 == 0 or epoch == epochs - 1:
                pred_np = forward(params, spec, t_norm) / scale
                err = float(
                    np.mean(np.linalg.norm(pred_np - labels, axis=0) / denom)
                )
                if err < best * (1 - 1e-3):
                    best, best_epoch = err, epoch
                    best_params = [(W.copy(), b.copy()) for W, b in params]
                elif epoch - best_epoch >= patience:
                    break
        body.params[name] = best_params
        for j, ch in enumerate(channels):
            cols = slice(j * head_count, (j + 1) * head_count)
            pred_np = forward(best_params, spec, t_norm)[:, cols] / scale
            lab = labels[:, cols]
            body.rel_l2[ch] = float(
                np.mean(np.linalg.norm(pred_np - lab, axis=0) / np.linalg.norm(lab, axis=0))
            )
    body.trained = True
    return body


def hidden_derivative_matrices(body: MultiHeadBody, problem: InverseProblem):
    """h(t) and dh/dt per net on the residual grid, computed exactly once.

    Returns (features, hash) where the hash pins immutability across the
    training loop.
    """
    feats = {}
    hasher = hashlib.sha256()
    for name in NET_LAYOUT:
        spec = body.spec(name)
        h, dh = body_features(body.params[name], spec, problem.t_norm, problem.tangent_seed)
        feats[name] = (h, dh)
        hasher.update(np.ascontiguousarray(h).tobytes())
        hasher.update(np.ascontiguousarray(dh).tobytes())
    return feats, hasher.hexdigest()


def _init_heads(body: MultiHeadBody, rng: np.random.Generator) -> dict:
    """Fresh sorted single-output heads, one per predicted channel."""
    heads = {}
    for name, (_, _, channels) in NET_LAYOUT.items():
        n_h = body.feature_width(name)
        sigma = np.sqrt(2.0 / (n_h + 1))
        for ch in channels:
            W = np.sort(rng.normal(0.0, sigma, size=(n_h, 1)), axis=0)
            heads[ch] = (W, np.zeros(1))
    return heads


def _head_states(heads: dict, feats: dict, specs_out: dict):
    """States and derivatives via the cached-feature chain rule."""
    states = {}
    for name, (_, out, channels) in NET_LAYOUT.items():
        h, dh = feats[name]
        for ch in channels:
            W, b = heads[ch]
            z = bk.matmul(h, W) + b
            vz = bk.matmul(dh, W)
            y, dy = output_and_derivative(specs_out[name], z, vz)
            states[ch] = y[:, 0]
            if ch == "p_im":
                states["dp_im"] = dy[:, 0]
            elif ch == "p_em":
                states["dp_em"] = dy[:, 0]
            elif ch == "omega_t":
                states["domega_t"] = dy[:, 0]
    return states


def fewshot_train(
    problem: InverseProblem,
    body: MultiHeadBody,
    seed: int,
    epochs: int = 30_000,
    lam_freeze: int = 20_000,
    lr: float = 1e-3,
    lam_lr: float = 1e-3,
    lam_temp_mean: float = 20.0,
    param_sigma: float = 0.2,
    record_loss_every: int = 200,
) -> TrainResult:
    """Phase II: head-only physics fine-tuning on one segment."""
    if not body.trained:
        raise ValueError("multi-head body is untrained")
    feats, feats_hash = hidden_derivative_matrices(body, problem)
    f_egr = precomputed_f_egr(problem)
    rng = np.random.default_rng(seed)
    heads = _init_heads(body, rng)
    masked0 = np.maximum(
        np.asarray(LAB_PARAMS_NORMALIZED) + param_sigma * rng.standard_normal(4), 0.05
    )
    latents = UnknownParams.from_normalized(masked0).latents
    weights = SelfAdaptiveWeights.initialize(problem, rng, temp_mean=lam_temp_mean)
    specs_out = {name: OutputSpec(*NET_LAYOUT[name][1]) for name in NET_LAYOUT}

    sched = descent_schedule(lr, epochs)
    opt_heads = Adam(lr=sched)
    opt_lam = Adam(lr=sched)
    opt_weights = {name: Adam(lr=lam_lr, ascent=True) for name in SelfAdaptiveWeights.GROUPS}

    head_order = list(heads)
    lam_traj = np.empty((epochs, len(PARAM_NAMES)))
    history = []
    t0 = time.perf_counter()
    for epoch in range(epochs):
        ascending = epoch < lam_freeze
        vheads = {
            ch: (bk.Var(W, requires_grad=True), bk.Var(b, requires_grad=True))
            for ch, (W, b) in heads.items()
        }
        vlat = bk.Var(latents, requires_grad=True)
        w = weights.traced() if ascending else weights
        states = _head_states(vheads, feats, specs_out)
        loss, comps = total_loss(states, vlat, w, problem, f_egr=f_egr)
        if not np.isfinite(comps["total"]):
            raise NonFiniteLoss(epoch, comps)
        bk.backward(loss)
        flat, grads = [], []
        for ch in head_order:
            W, b = vheads[ch]
            flat += [W.value, b.value]
            grads += [
                W.grad if W.grad is not None else np.zeros_like(W.value),
                b.grad if b.grad is not None else np.zeros_like(b.value),
            ]
        opt_heads.step(flat, grads)
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

    _, feats_hash_after = hidden_derivative_matrices(body, problem)
    return TrainResult(
        net_params={"heads": {ch: heads[ch] for ch in head_order}},
        latents=latents,
        weights=weights,
        lam_trajectory=lam_traj,
        loss_history=history,
        epochs=epochs,
        seconds=seconds,
        meta={
            "seed": seed,
            "method": "fewshot",
            "lam_freeze": lam_freeze,
            "feature_hash": feats_hash,
            "feature_hash_after": feats_hash_after,
        },
    )
