from .empirical import (
    SCHEMAS,
    SURROGATE_NAMES,
    SurrogateEmpiricals,
    SurrogateSet,
    TrainedSurrogate,
    build_training_table,
    rel_l2,
    train_surrogate,
)

__all__ = [
    "SCHEMAS",
    "SURROGATE_NAMES",
    "SurrogateEmpiricals",
    "SurrogateSet",
    "TrainedSurrogate",
    "build_training_table",
    "rel_l2",
    "train_surrogate",
]
