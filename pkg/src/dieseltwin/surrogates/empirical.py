"""Data-driven stand-ins for the six empirical engine relations.

Each network learns one closed-form relation from laboratory datasets and
carries its published output restriction (sigmoid bounds, efficiency caps).
During inverse training the nets are frozen but keep a small dropout whose
mask is sampled once per run, modelling unit-to-unit spread.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import (
    Adam,
    DenseNetSpec,
    OutputSpec,
    forward,
    init_params,
    load_checkpoint,
    sample_dropout_masks,
    save_checkpoint,
)
from ..nn import tape as bk

__all__ = [
    "SURROGATE_NAMES",
    "SurrogateSchema",
    "SCHEMAS",
    "TrainedSurrogate",
    "SurrogateSet",
    "SurrogateEmpiricals",
    "build_training_table",
    "train_surrogate",
    "rel_l2",
]

SURROGATE_NAMES = ("eta_vol", "f_egr", "F_vgt_pit", "eta_tm", "eta_c", "phi_c")

HIDDEN = (30, 30)
DROPOUT = 0.01
LABEL_NOISE = 0.03


@dataclass(frozen=True)
class SurrogateSchema:
    name: str
    inputs: tuple
    output: OutputSpec
    clamp: tuple | None = None  # ("min"|"max", bound) applied after transform
    train_cases: tuple | None = None  # restrict training rows to these case ids
    target: str | None = None  # dataset channel holding the labels
    # Keep only rows on which the relation is physically meaningful; the
    # turbine-efficiency map is undefined near zero expansion ratio where
    # windage drives the closed form to large negative values.
    row_filter: object = None

    @property
    def label_channel(self) -> str:
        return self.target or self.name


def _eta_tm_rows(X, y):
    """Active-turbine region: positive efficiency, meaningful expansion."""
    return (y > 0.0) & (X[:, 2] < 0.97)


SCHEMAS = {
    "eta_vol": SurrogateSchema("eta_vol", ("p_im", "n_e"), OutputSpec("identity")),
    "f_egr": SurrogateSchema(
        "f_egr", ("u_egr_tilde",), OutputSpec("sigmoid"), train_cases=("case1",)
    ),
    "F_vgt_pit": SurrogateSchema(
        "F_vgt_pit", ("u_vgt_t", "Pi_t"), OutputSpec("sigmoid", 0.0, 1.1)
    ),
    "eta_tm": SurrogateSchema(
        "eta_tm", ("omega_t", "T_em", "Pi_t"), OutputSpec("identity"), ("min", 0.818),
        row_filter=_eta_tm_rows,
    ),
    "eta_c": SurrogateSchema(
        "eta_c", ("W_c", "Pi_c"), OutputSpec("sigmoid"), ("max", 0.2)
    ),
    "phi_c": SurrogateSchema(
        "phi_c", ("T_amb", "Pi_c", "omega_t"), OutputSpec("sigmoid"), target="Phi_c"
    ),
}


def rel_l2(pred, truth) -> float:
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    return float(np.linalg.norm(pred - truth) / np.linalg.norm(truth))


def _feature(ds, name):
    if name == "T_amb":
        return np.full(len(ds), ds.meta["ambient"]["T_amb"])
    return ds.channels[name]


def build_training_table(datasets):
    """Per-surrogate (X, y) arrays from laboratory datasets.

    The EGR area-ratio net trains on one ambient case only; the rest pool
    every provided dataset.  Raises on empty input or missing channels.
    """
    if not datasets:
        raise ValueError("no datasets given; training refused")
    tables = {}
    for name, schema in SCHEMAS.items():
        rows_X, rows_y = [], []
        for ds in datasets:
            case = ds.meta.get("case_id")
            if schema.train_cases and case not in schema.train_cases:
                continue
            for ch in schema.inputs:
                if ch != "T_amb" and ch not in ds.channels:
                    raise KeyError(f"dataset {case!r} lacks channel {ch!r}")
            rows_X.append(np.column_stack([_feature(ds, ch) for ch in schema.inputs]))
            rows_y.append(ds.channels[schema.label_channel])
        if not rows_X:
            raise ValueError(f"no datasets matched for surrogate {name!r}")
        X, y = np.vstack(rows_X), np.concatenate(rows_y)
        if schema.row_filter is not None:
            keep = schema.row_filter(X, y)
            X, y = X[keep], y[keep]
        tables[name] = (X, y)
    return tables


def _normalize(X, lo, hi):
    span = hi - lo
    return (X - lo) / span * 2.0 - 1.0


@dataclass
class TrainedSurrogate:
    schema: SurrogateSchema
    spec: DenseNetSpec
    params: list
    lo: np.ndarray
    hi: np.ndarray
    train_rel_l2: float
    epochs_run: int

    def predict(self, features, dropout_masks=None):
        """Restricted prediction; features are per-input columns (or Vars).

        Plain scalars broadcast against the array features.
        """
        n = max(
            (np.size(bk.value_of(f)) for f in features),
            default=1,
        )
        features = [
            np.full(n, float(f)) if np.ndim(bk.value_of(f)) == 0 else f
            for f in features
        ]
        cols = [
            (f - self.lo[i]) / (self.hi[i] - self.lo[i]) * 2.0 - 1.0
            for i, f in enumerate(features)
        ]
        X = bk.stack_cols(cols)
        y = forward(self.params, self.spec, X, dropout_masks=dropout_masks)
        y = y[:, 0] if np.ndim(bk.value_of(y)) == 2 else y
        if self.schema.clamp is not None:
            kind, bound = self.schema.clamp
            y = bk.minimum(y, bound) if kind == "min" else bk.maximum(y, bound)
        return y


def train_surrogate(
    name: str,
    table,
    seed: int = 0,
    epochs: int = 50_000,
    lr: float = 1e-3,
    patience: int = 5_000,
    label_noise: float = LABEL_NOISE,
    hidden=HIDDEN,
    dropout: float = DROPOUT,
) -> TrainedSurrogate:
    """Fit one surrogate by full-batch MSE with Adam.

    Labels are corrupted once by multiplicative Gaussian noise (simulated
    lab-measurement error); the reported rel-L2 is against clean labels.
    Training stops early when that error stops improving.
    """
    schema = SCHEMAS[name]
    X, y_clean = table[name] if isinstance(table, dict) else table
    if X.shape[0] == 0:
        raise ValueError("empty training table")
    rng = np.random.default_rng(seed)
    y = y_clean * (1.0 + label_noise * rng.standard_normal(y_clean.shape))
    lo, hi = X.min(axis=0), X.max(axis=0)
    hi = np.where(hi - lo < 1e-12, lo + 1.0, hi)
    Xn = _normalize(X, lo, hi)

    spec = DenseNetSpec((X.shape[1], *hidden, 1), schema.output, dropout=dropout)
    params = init_params(spec, rng)
    # Start the output at the label mean so bounded transforms are not
    # stuck in their flat tails.
    mean = float(np.mean(y_clean))
    if schema.output.kind == "sigmoid":
        q = min(max(mean / schema.output.scale, 1e-6), 1 - 1e-6)
        params[-1][1][:] = np.log(q / (1.0 - q))
    elif schema.output.kind == "identity":
        params[-1][1][:] = mean / schema.output.scale
    opt = Adam(lr=lr)
    surrogate = TrainedSurrogate(schema, spec, params, lo, hi, np.inf, 0)

    best, best_epoch, best_params = np.inf, 0, params
    yv = y.reshape(-1, 1)
    for epoch in range(epochs):
        masks = sample_dropout_masks(spec, rng)
        vparams = [
            (bk.Var(W, requires_grad=True), bk.Var(b, requires_grad=True))
            for W, b in params
        ]
        pred = forward(vparams, spec, Xn, dropout_masks=masks)
        if schema.clamp is not None:
            kind, bound = schema.clamp
            pred = bk.minimum(pred, bound) if kind == "min" else bk.maximum(pred, bound)
        loss = bk.vmean(bk.square(pred - yv))
        if not np.isfinite(loss.value):
            raise RuntimeError(f"surrogate {name!r} diverged at epoch {epoch}")
        bk.backward(loss)
        flat, grads = [], []
        for W, b in vparams:
            flat += [W.value, b.value]
            grads += [W.grad, b.grad]
        opt.step(flat, grads)
        if epoch % 200 == 0 or epoch == epochs - 1:
            clean = surrogate.predict([X[:, i] for i in range(X.shape[1])])
            err = rel_l2(clean, y_clean)
            if err < best - 1e-4:
                best, best_epoch = err, epoch
                best_params = [(W.copy(), b.copy()) for W, b in params]
            elif epoch - best_epoch >= patience:
                break
    surrogate.params = best_params
    surrogate.train_rel_l2 = best
    surrogate.epochs_run = epoch + 1
    return surrogate


class SurrogateSet:
    """The six trained nets plus frozen-mask prediction and persistence."""

    def __init__(self, nets: dict):
        missing = set(SURROGATE_NAMES) - set(nets)
        if missing:
            raise ValueError(f"missing surrogates: {sorted(missing)}")
        self.nets = nets

    def __getitem__(self, name) -> TrainedSurrogate:
        return self.nets[name]

    def predict(self, name, features, mask_seed=None):
        """Evaluate one surrogate with a per-run frozen dropout mask."""
        net = self.nets[name]
        masks = None
        if mask_seed is not None and net.spec.dropout > 0.0:
            masks = sample_dropout_masks(net.spec, np.random.default_rng(mask_seed))
        return net.predict(features, dropout_masks=masks)

    def masks_for_run(self, mask_seed: int) -> dict:
        """One frozen mask set per surrogate, keyed by name."""
        root = np.random.default_rng(mask_seed)
        seeds = root.integers(0, 2**63 - 1, size=len(SURROGATE_NAMES))
        out = {}
        for name, s in zip(SURROGATE_NAMES, seeds):
            spec = self.nets[name].spec
            out[name] = (
                sample_dropout_masks(spec, np.random.default_rng(int(s)))
                if spec.dropout > 0.0
                else None
            )
        return out

    def save(self, directory) -> None:
        from pathlib import Path

        directory = Path(directory)
        for name, net in self.nets.items():
            arrays = [a for W_b in net.params for a in W_b]
            manifest = {
                "surrogate": name,
                "widths": list(net.spec.widths),
                "output": [net.spec.output.kind, net.spec.output.shift, net.spec.output.scale],
                "dropout": net.spec.dropout,
                "clamp": list(net.schema.clamp) if net.schema.clamp else None,
                "inputs": list(net.schema.inputs),
                "normalization": {"lo": net.lo.tolist(), "hi": net.hi.tolist()},
                "train_rel_l2": net.train_rel_l2,
                "epochs_run": net.epochs_run,
            }
            save_checkpoint(directory / name, manifest, arrays)

    @classmethod
    def load(cls, directory) -> "SurrogateSet":
        from pathlib import Path

        directory = Path(directory)
        nets = {}
        for name in SURROGATE_NAMES:
            manifest, arrays = load_checkpoint(directory / name)
            spec = DenseNetSpec(
                tuple(manifest["widths"]),
                OutputSpec(*manifest["output"]),
                dropout=manifest["dropout"],
            )
            params = [
                (arrays[i], arrays[i + 1]) for i in range(0, len(arrays), 2)
            ]
            schema = SCHEMAS[name]
            nets[name] = TrainedSurrogate(
                schema,
                spec,
                params,
                np.asarray(manifest["normalization"]["lo"]),
                np.asarray(manifest["normalization"]["hi"]),
                manifest.get("train_rel_l2", np.nan),
                manifest.get("epochs_run", 0),
            )
        return cls(nets)


class SurrogateEmpiricals:
    """Empirical-source adapter over a SurrogateSet with frozen masks.

    Exposes the same method surface as the ground-truth formulas, so the
    engine blocks and residual wiring accept either interchangeably.
    """

    def __init__(self, sset: SurrogateSet, mask_seed: int | None = None):
        self.sset = sset
        self.masks = (
            sset.masks_for_run(mask_seed)
            if mask_seed is not None
            else {n: None for n in SURROGATE_NAMES}
        )

    def _p(self, name, features):
        return self.sset.nets[name].predict(features, dropout_masks=self.masks[name])

    def eta_vol(self, p_im, n_e):
        return self._p("eta_vol", [p_im, n_e])

    def f_egr(self, u_egr_tilde):
        return self._p("f_egr", [u_egr_tilde])

    def F_vgt_pit(self, u_vgt_tilde, Pi_t):
        return self._p("F_vgt_pit", [u_vgt_tilde, Pi_t])

    def eta_tm(self, omega_t, T_em, Pi_t):
        return self._p("eta_tm", [omega_t, T_em, Pi_t])

    def eta_c(self, W_c, Pi_c):
        return self._p("eta_c", [W_c, Pi_c])

    def phi_c(self, T_amb, Pi_c, omega_t):
        return self._p("phi_c", [T_amb, Pi_c, omega_t])
