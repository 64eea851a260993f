from .ensemble import EnsembleResult, ensemble_run, summarize_estimates
from .fewshot import (
    MULTIHEAD_HIDDEN,
    MultiHeadBody,
    collect_head_windows,
    fewshot_train,
    hidden_derivative_matrices,
    multihead_offline_train,
)
from .multistage import StageSchedule, multistage_train_segment

__all__ = [
    "EnsembleResult",
    "ensemble_run",
    "summarize_estimates",
    "MULTIHEAD_HIDDEN",
    "MultiHeadBody",
    "collect_head_windows",
    "fewshot_train",
    "hidden_derivative_matrices",
    "multihead_offline_train",
    "StageSchedule",
    "multistage_train_segment",
]
