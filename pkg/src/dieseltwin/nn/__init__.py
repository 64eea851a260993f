from . import tape
from .adam import Adam, PiecewiseConstant
from .checkpoint import load_checkpoint, save_checkpoint
from .net import (
    DenseNetSpec,
    OutputSpec,
    apply_output,
    body_features,
    forward,
    forward_with_input_derivative,
    init_params,
    num_params,
    output_and_derivative,
    sample_dropout_masks,
)

__all__ = [
    "tape",
    "Adam",
    "PiecewiseConstant",
    "load_checkpoint",
    "save_checkpoint",
    "DenseNetSpec",
    "OutputSpec",
    "apply_output",
    "body_features",
    "forward",
    "forward_with_input_derivative",
    "init_params",
    "num_params",
    "output_and_derivative",
    "sample_dropout_masks",
]
