"""Dense tanh networks: initialization, forward, and input derivatives.

Parameters are plain lists of (W, b) numpy arrays.  Pass tape variables
instead to make the forward differentiable with respect to the weights;
the input-derivative propagation is itself built from tape primitives, so
reverse mode through it is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tape as bk

__all__ = [
    "OutputSpec",
    "DenseNetSpec",
    "init_params",
    "forward",
    "forward_with_input_derivative",
    "body_features",
    "apply_output",
    "output_and_derivative",
    "num_params",
]


@dataclass(frozen=True)
class OutputSpec:
    """Output transform applied to the last-layer preactivation.

    y = (f(z) + shift) * scale with f in {softplus, sigmoid, identity}.
    """

    kind: str = "identity"
    shift: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("softplus", "sigmoid", "identity"):
            raise ValueError(f"unknown output transform {self.kind!r}")


@dataclass(frozen=True)
class DenseNetSpec:
    """Layer widths, shared hidden activation (tanh), and output transform."""

    widths: tuple
    output: OutputSpec = OutputSpec()
    dropout: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2 or any(w < 1 for w in self.widths):
            raise ValueError("widths must be >= 1 with at least two layers")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @property
    def n_in(self) -> int:
        return self.widths[0]

    @property
    def n_out(self) -> int:
        return self.widths[-1]

    @property
    def n_hidden_last(self) -> int:
        return self.widths[-2]


def init_params(
    spec: DenseNetSpec,
    rng: np.random.Generator,
    last_layer_sigma10: bool = False,
    sort_last: bool = False,
):
    """Draw parameters: N(0, 2/(fan_in+fan_out)) weights, zero biases.

    ``last_layer_sigma10`` widens the output layer to N(0, 10/(...)) (used
    when training wide multi-head output layers); ``sort_last`` sorts each
    output column of the last layer ascending (used for fresh single heads).
    """
    params = []
    n_layers = len(spec.widths) - 1
    for i in range(n_layers):
        fan_in, fan_out = spec.widths[i], spec.widths[i + 1]
        sigma = np.sqrt(2.0 / (fan_in + fan_out))
        if i == n_layers - 1 and last_layer_sigma10:
            sigma = np.sqrt(10.0 / (fan_in + fan_out))
        W = rng.normal(0.0, sigma, size=(fan_in, fan_out))
        if i == n_layers - 1 and sort_last:
            W = np.sort(W, axis=0)
        params.append((W, np.zeros(fan_out)))
    return params


def num_params(params) -> int:
    return sum(np.size(bk.value_of(W)) + np.size(bk.value_of(b)) for W, b in params)


def sample_dropout_masks(spec: DenseNetSpec, rng: np.random.Generator):
    """Inverted-dropout masks for each hidden layer (None when rate is 0)."""
    if spec.dropout == 0.0:
        return None
    keep = 1.0 - spec.dropout
    return [
        (rng.random(w) < keep).astype(float) / keep for w in spec.widths[1:-1]
    ]


def apply_output(out: OutputSpec, z):
    if out.kind == "softplus":
        f = bk.softplus(z)
    elif out.kind == "sigmoid":
        f = bk.sigmoid(z)
    else:
        f = z
    return (f + out.shift) * out.scale if out.shift != 0.0 else f * out.scale


def output_and_derivative(out: OutputSpec, z, vz):
    """Transformed output and its derivative given (z, dz/dt)."""
    if out.kind == "softplus":
        y = (bk.softplus(z) + out.shift) * out.scale
        dy = bk.sigmoid(z) * vz * out.scale
    elif out.kind == "sigmoid":
        s = bk.sigmoid(z)
        y = (s + out.shift) * out.scale
        dy = s * (1.0 - s) * vz * out.scale
    else:
        y = (z + out.shift) * out.scale
        dy = vz * out.scale
    return y, dy


def forward(params, spec: DenseNetSpec, x, dropout_masks=None, transform=True):
    """Evaluate the network on a batch ``x`` of shape (n, n_in)."""
    a = x
    for i, (W, b) in enumerate(params[:-1]):
        a = bk.tanh(a @ W + b)
        if dropout_masks is not None:
            a = a * dropout_masks[i]
    W, b = params[-1]
    z = a @ W + b
    return apply_output(spec.output, z) if transform else z


def forward_with_input_derivative(params, spec: DenseNetSpec, t, tangent_seed=1.0):
    """Forward pass with the derivative of y with respect to the scalar input.

    ``t`` has shape (n, 1); ``tangent_seed`` is dt_input/dt_physical so the
    returned derivative is with respect to physical time when the input is
    normalized.  Dropout is rejected: the derivative of a stochastic mask
    is undefined for residual evaluation.
    """
    if spec.dropout != 0.0:
        raise ValueError("input derivatives are undefined under sampled dropout")
    if spec.n_in != 1:
        raise ValueError("input derivative requires a single scalar input")
    a = t
    v = np.full(np.shape(bk.value_of(t)), float(tangent_seed))
    for W, b in params[:-1]:
        z = a @ W + b
        vz = v @ W if isinstance(v, bk.Var) else bk.matmul(v, W)
        a = bk.tanh(z)
        v = (1.0 - a * a) * vz
    W, b = params[-1]
    z = a @ W + b
    vz = bk.matmul(v, W)
    return output_and_derivative(spec.output, z, vz)


def body_features(params, spec: DenseNetSpec, t, tangent_seed=1.0):
    """Last hidden layer activations and their time derivative.

    Used by head-only fine-tuning: ``h`` and ``dh/dt`` are computed once on
    a frozen body and reused for every training step.
    """
    if spec.n_in != 1:
        raise ValueError("body features require a single scalar input")
    a = t
    v = np.full(np.shape(bk.value_of(t)), float(tangent_seed))
    for W, b in params[:-1]:
        z = a @ W + b
        vz = bk.matmul(v, W)
        a = bk.tanh(z)
        v = (1.0 - a * a) * vz
    return a, v
