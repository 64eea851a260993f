from .causal import (
    WINDOW_DT,
    WINDOW_POINTS,
    WINDOW_SECONDS,
    assemble_causal_inputs,
    causal_history_matrix,
    trunk_grid,
)
from .model import (
    EGR_SPEC,
    VGT_SPEC,
    CausalDeepONet,
    DeepONetSpec,
    TrainReport,
    train_deeponet,
    windows_from_dataset,
)

__all__ = [
    "WINDOW_DT",
    "WINDOW_POINTS",
    "WINDOW_SECONDS",
    "assemble_causal_inputs",
    "causal_history_matrix",
    "trunk_grid",
    "EGR_SPEC",
    "VGT_SPEC",
    "CausalDeepONet",
    "DeepONetSpec",
    "TrainReport",
    "train_deeponet",
    "windows_from_dataset",
]
