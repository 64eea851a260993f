"""Digital-twin toolkit for a mean-value turbocharged diesel engine.

Simulates the six-state gas-flow model, pretrains data-driven stand-ins
(empirical-formula networks and windowed operator networks for the
actuators), and recovers four health parameters from measured channels by
hybrid physics-informed training, with multi-stage and few-shot transfer
variants.
"""

from .constants import (
    AmbientConditions,
    EngineConstants,
    FIELD_PARAMS_NORMALIZED,
    LAB_PARAMS_NORMALIZED,
    PARAM_NAMES,
    UnknownParams,
)

__version__ = "0.1.0"

__all__ = [
    "AmbientConditions",
    "EngineConstants",
    "FIELD_PARAMS_NORMALIZED",
    "LAB_PARAMS_NORMALIZED",
    "PARAM_NAMES",
    "UnknownParams",
    "__version__",
]
