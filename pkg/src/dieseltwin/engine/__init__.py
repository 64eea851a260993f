"""Algebraic engine core with compiled/pure-Python kernel selection.

``CORE_BACKEND`` records which trajectory kernel is active: the Cython
extension when it built, else the pure-Python twin.  Both implement the
same algorithm with the same operation order; ``benchmarks/bench_core.py``
compares their throughput.
"""

from . import formulas, pycore
from .formulas import (
    AlgebraicDivergence,
    EngineDomainError,
    ExhaustFlowSingularity,
    GroundTruthEmpiricals,
    OMEGA_MIN,
    compressor,
    cylinder_flow,
    cylinder_temperature,
    egr_flow,
    egr_valve_position,
    solve_algebraic_pair,
    state_derivatives,
    turbine,
)

try:
    from . import _core

    CORE_BACKEND = "compiled"
except ImportError:  # extension not built; fall back to pure Python
    _core = None
    CORE_BACKEND = "python"

__all__ = [
    "formulas",
    "pycore",
    "CORE_BACKEND",
    "AlgebraicDivergence",
    "EngineDomainError",
    "ExhaustFlowSingularity",
    "GroundTruthEmpiricals",
    "OMEGA_MIN",
    "compressor",
    "cylinder_flow",
    "cylinder_temperature",
    "egr_flow",
    "egr_valve_position",
    "solve_algebraic_pair",
    "state_derivatives",
    "turbine",
]
