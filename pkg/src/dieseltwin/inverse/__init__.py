from .problem import CHANNEL_SCALES, DATA_CHANNELS, NET_LAYOUT, InverseProblem, build_problem
from .residuals import masked_params, physics_residuals, total_loss
from .training import (
    NonFiniteLoss,
    TrainResult,
    descent_schedule,
    evaluate_states,
    init_inverse,
    minmax_scaled,
    net_specs,
    predict_all,
    train_baseline,
)
from .weights import ALPHA, SelfAdaptiveWeights

__all__ = [
    "CHANNEL_SCALES",
    "DATA_CHANNELS",
    "NET_LAYOUT",
    "InverseProblem",
    "build_problem",
    "masked_params",
    "physics_residuals",
    "total_loss",
    "NonFiniteLoss",
    "TrainResult",
    "descent_schedule",
    "evaluate_states",
    "init_inverse",
    "minmax_scaled",
    "net_specs",
    "predict_all",
    "train_baseline",
    "ALPHA",
    "SelfAdaptiveWeights",
]
