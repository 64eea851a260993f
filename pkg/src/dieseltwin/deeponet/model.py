"""Windowed operator networks for the actuator states.

Two networks: one with four branches predicting both EGR actuator states,
one with two branches predicting the VGT state.  For each output, a
history branch (fed the causal history matrix) pairs elementwise with an
initial-condition branch, and the shared trunk supplies the time basis:

    y_k(t_j) = transform( sum_i hist_k(H_j)_i * ic_k(u0_k)_i * trunk(t_j)_i )

The sum carries no bias; a sigmoid scaled by 100 keeps predictions inside
the actuator range.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..nn import (
    Adam,
    DenseNetSpec,
    OutputSpec,
    PiecewiseConstant,
    forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from ..nn import tape as bk
from .causal import WINDOW_POINTS, causal_history_matrix, trunk_grid

__all__ = ["DeepONetSpec", "CausalDeepONet", "TrainReport", "train_deeponet", "EGR_SPEC", "VGT_SPEC"]

IC_SCALE = 100.0
OUT = OutputSpec("sigmoid", 0.0, 100.0)


@dataclass(frozen=True)
class DeepONetSpec:
    """Architecture and loss weighting of one actuator network."""

    name: str
    outputs: tuple                 # label channel names, one per output
    p: int = 50                    # latent basis width shared by all sub-nets
    hist_hidden: tuple = (50,)
    ic_hidden: tuple = (50,)
    trunk_hidden: tuple = (50, 50)
    loss_weights: tuple = (1.0,)

    def __post_init__(self):
        if len(self.loss_weights) != len(self.outputs):
            raise ValueError("one loss weight per output")

    @property
    def n_outputs(self) -> int:
        return len(self.outputs)

    @property
    def n_branches(self) -> int:
        return 2 * self.n_outputs

    def subnet_specs(self):
        hist = DenseNetSpec((WINDOW_POINTS, *self.hist_hidden, self.p))
        ic = DenseNetSpec((1, *self.ic_hidden, self.p))
        trunk = DenseNetSpec((1, *self.trunk_hidden, self.p))
        return hist, ic, trunk


EGR_SPEC = DeepONetSpec(
    "egr", outputs=("u_egr1_t", "u_egr2_t"), loss_weights=(1.0, 100.0)
)
VGT_SPEC = DeepONetSpec("vgt", outputs=("u_vgt_t",))


@dataclass
class TrainReport:
    train_rel_l2: dict
    test_rel_l2: dict
    epochs: int


@dataclass
class CausalDeepONet:
    spec: DeepONetSpec
    params: dict          # "hist0", "ic0", ..., "trunk" -> list[(W, b)]
    u_scale: float = 1.0  # history input scaling from the training data
    report: TrainReport | None = None

    @classmethod
    def initialize(cls, spec: DeepONetSpec, rng: np.random.Generator) -> "CausalDeepONet":
        hist, ic, trunk = spec.subnet_specs()
        params = {}
        for k in range(spec.n_outputs):
            params[f"hist{k}"] = init_params(hist, rng)
            params[f"ic{k}"] = init_params(ic, rng)
        params["trunk"] = init_params(trunk, rng)
        return cls(spec=spec, params=params)

    def _features(self, params, rows, ics, t_scaled):
        """Per-output (hist, ic) features plus trunk features."""
        hist_spec, ic_spec, trunk_spec = self.spec.subnet_specs()
        tr = forward(params["trunk"], trunk_spec, t_scaled, transform=False)
        feats = []
        for k in range(self.spec.n_outputs):
            hf = forward(params[f"hist{k}"], hist_spec, rows, transform=False)
            icf = forward(params[f"ic{k}"], ic_spec, ics[:, k : k + 1] / IC_SCALE, transform=False)
            feats.append((hf, icf))
        return feats, tr

    def forward_rows(self, params, rows, ics, trunk_feats_rows):
        """Outputs for gathered rows; all three factors row-aligned."""
        hist_spec, ic_spec, _ = self.spec.subnet_specs()
        outs = []
        for k in range(self.spec.n_outputs):
            hf = forward(params[f"hist{k}"], hist_spec, rows, transform=False)
            icf = forward(params[f"ic{k}"], ic_spec, ics[:, k : k + 1] / IC_SCALE, transform=False)
            raw = bk.vsum(hf * icf * trunk_feats_rows, axis=1)
            outs.append((bk.sigmoid(raw)) * OUT.scale)
        return outs

    def predict_window(self, u_d: np.ndarray, initial_conditions) -> np.ndarray:
        """Trajectories (301, n_outputs) for one window.

        The last row chains as the next window's initial condition.
        """
        H = causal_history_matrix(u_d) / self.u_scale
        ics = np.atleast_1d(np.asarray(initial_conditions, dtype=float))
        if ics.size != self.spec.n_outputs:
            raise ValueError("one initial condition per output")
        hist_spec, ic_spec, trunk_spec = self.spec.subnet_specs()
        tr = forward(self.params["trunk"], trunk_spec, trunk_grid(), transform=False)
        cols = []
        for k in range(self.spec.n_outputs):
            hf = forward(self.params[f"hist{k}"], hist_spec, H, transform=False)
            icf = forward(
                self.params[f"ic{k}"], ic_spec, ics[k].reshape(1, 1) / IC_SCALE,
                transform=False,
            )
            raw = np.sum(hf * icf * tr, axis=1)
            cols.append(bk.sigmoid(raw) * OUT.scale)
        return np.column_stack(cols)

    def flat_params(self):
        order = [f"{kind}{k}" for k in range(self.spec.n_outputs) for kind in ("hist", "ic")]
        order.append("trunk")
        arrays, layout = [], []
        for key in order:
            for W, b in self.params[key]:
                arrays += [W, b]
            layout.append((key, len(self.params[key])))
        return arrays, layout

    def save(self, base) -> None:
        arrays, layout = self.flat_params()
        manifest = {
            "name": self.spec.name,
            "outputs": list(self.spec.outputs),
            "p": self.spec.p,
            "hist_hidden": list(self.spec.hist_hidden),
            "ic_hidden": list(self.spec.ic_hidden),
            "trunk_hidden": list(self.spec.trunk_hidden),
            "loss_weights": list(self.spec.loss_weights),
            "u_scale": self.u_scale,
            "layout": [[k, n] for k, n in layout],
            "report": {
                "train_rel_l2": self.report.train_rel_l2,
                "test_rel_l2": self.report.test_rel_l2,
                "epochs": self.report.epochs,
            }
            if self.report
            else None,
        }
        save_checkpoint(base, manifest, arrays)

    @classmethod
    def load(cls, base) -> "CausalDeepONet":
        manifest, arrays = load_checkpoint(base)
        spec = DeepONetSpec(
            manifest["name"],
            tuple(manifest["outputs"]),
            p=manifest["p"],
            hist_hidden=tuple(manifest["hist_hidden"]),
            ic_hidden=tuple(manifest["ic_hidden"]),
            trunk_hidden=tuple(manifest["trunk_hidden"]),
            loss_weights=tuple(manifest["loss_weights"]),
        )
        params, pos = {}, 0
        for key, n_layers in manifest["layout"]:
            layers = []
            for _ in range(n_layers):
                layers.append((arrays[pos], arrays[pos + 1]))
                pos += 2
            params[key] = layers
        model = cls(spec=spec, params=params, u_scale=manifest["u_scale"])
        if manifest.get("report"):
            r = manifest["report"]
            model.report = TrainReport(r["train_rel_l2"], r["test_rel_l2"], r["epochs"])
        return model


def window_loss(model: CausalDeepONet, u_d, labels):
    """Weighted MSE over one window plus the per-output parts."""
    pred = model.predict_window(u_d, np.asarray(labels)[0, :])
    per_output = {
        name: float(np.mean((pred[:, k] - labels[:, k]) ** 2))
        for k, name in enumerate(model.spec.outputs)
    }
    total = float(
        sum(w * per_output[name] for w, name in zip(model.spec.loss_weights, model.spec.outputs))
    )
    return total, per_output


def windows_from_dataset(ds, input_channel: str, label_channels, stride_points: int):
    """Sliding 60 s windows of (delayed input, stacked labels) pairs."""
    n = len(ds)
    starts = range(0, n - WINDOW_POINTS + 1, stride_points)
    out = []
    for s in starts:
        u_d = ds.channels[input_channel][s : s + WINDOW_POINTS]
        labels = np.column_stack(
            [ds.channels[c][s : s + WINDOW_POINTS] for c in label_channels]
        )
        out.append((u_d, labels))
    return out


def train_deeponet(
    model: CausalDeepONet,
    train_windows,
    test_windows=(),
    seed: int = 0,
    epochs: int = 30_000,
    batch_rows: int = 256,
    lr: float = 1e-3,
    label_noise: float = 0.0,
) -> CausalDeepONet:
    """Train on (u_d, labels) windows; one epoch is one Adam step.

    Reports train/test rel-L2 per output against clean labels.
    """
    if not train_windows:
        raise ValueError("no training windows")
    spec = model.spec
    rng = np.random.default_rng(seed)

    u_scale = max(float(np.abs(w[0]).max()) for w in train_windows)
    model.u_scale = u_scale if u_scale > 0 else 1.0

    H_all = np.stack([causal_history_matrix(w[0]) / model.u_scale for w in train_windows])
    Y_all = np.stack([w[1] for w in train_windows])  # (W, 301, n_out)
    if label_noise > 0.0:
        Y_train = Y_all * (1.0 + label_noise * rng.standard_normal(Y_all.shape))
    else:
        Y_train = Y_all
    ICS = Y_all[:, 0, :]  # initial conditions are the first clean samples
    n_windows = H_all.shape[0]
    t_sc = trunk_grid()

    hist_spec, ic_spec, trunk_spec = spec.subnet_specs()
    schedule = PiecewiseConstant.fractions([lr, lr / 2, lr / 10], [0.5, 0.85], epochs)
    opt = Adam(lr=schedule)

    keys = [f"{kind}{k}" for k in range(spec.n_outputs) for kind in ("hist", "ic")]
    keys.append("trunk")

    for epoch in range(epochs):
        wi = rng.integers(0, n_windows, size=batch_rows)
        ti = rng.integers(0, WINDOW_POINTS, size=batch_rows)
        rows = H_all[wi, ti, :]
        ics = ICS[wi]
        labels = Y_train[wi, ti, :]

        vparams = {
            key: [
                (bk.Var(W, requires_grad=True), bk.Var(b, requires_grad=True))
                for W, b in model.params[key]
            ]
            for key in keys
        }
        tr_full = forward(vparams["trunk"], trunk_spec, t_sc, transform=False)
        tr_rows = tr_full[ti, :]
        loss = 0.0
        for k in range(spec.n_outputs):
            hf = forward(vparams[f"hist{k}"], hist_spec, rows, transform=False)
            icf = forward(
                vparams[f"ic{k}"], ic_spec, ics[:, k : k + 1] / IC_SCALE, transform=False
            )
            raw = bk.vsum(hf * icf * tr_rows, axis=1)
            pred = bk.sigmoid(raw) * OUT.scale
            loss = loss + spec.loss_weights[k] * bk.vmean(bk.square(pred - labels[:, k]))
        if not np.isfinite(loss.value):
            raise RuntimeError(f"deeponet {spec.name!r} diverged at epoch {epoch}")
        bk.backward(loss)
        flat, grads = [], []
        for key in keys:
            for W, b in vparams[key]:
                flat += [W.value, b.value]
                grads += [W.grad if W.grad is not None else np.zeros_like(W.value),
                          b.grad if b.grad is not None else np.zeros_like(b.value)]
        opt.step(flat, grads)

    def _errors(windows, Y_clean=None):
        errs = {name: [0.0, 0.0] for name in spec.outputs}
        for i, (u_d, labels) in enumerate(windows):
            clean = labels if Y_clean is None else Y_clean[i]
            pred = model.predict_window(u_d, clean[0, :])
            for j, name in enumerate(spec.outputs):
                errs[name][0] += np.sum((pred[:, j] - clean[:, j]) ** 2)
                errs[name][1] += np.sum(clean[:, j] ** 2)
        return {
            name: float(np.sqrt(num / den)) if den > 0 else float("nan")
            for name, (num, den) in errs.items()
        }

    train_err = _errors(train_windows, Y_all)
    test_err = _errors(list(test_windows)) if len(test_windows) else {}
    model.report = TrainReport(train_err, test_err, epochs)
    return model
