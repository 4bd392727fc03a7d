"""Fixed-point acceleration by alternating Anderson-Picard mixing.

Public surface: problem containers and helpers (`FixedPointProblem`,
`from_fixed_point_form`), the solver (`solve`, `SolverConfig`), the masking
strategies (`Adaptivity`), and the built-in grid problems under
`aap.problems`.
"""
from .fixed_point import (
    FixedPointProblem,
    NumericalBreakdown,
    UnknownField,
    evaluate_residual,
    field_indices,
    from_fixed_point_form,
)
from .lsq import RankDeficient, estimate_sigma_min, qr_masked_solve
from .sketching import Adaptivity, InvalidMask, MaskOperator, StabilityTrace
from .solver import SolveReport, SolverConfig, TraceStep, solve, solve_plain

__version__ = "0.1.0"

__all__ = [
    "Adaptivity",
    "FixedPointProblem",
    "InvalidMask",
    "MaskOperator",
    "NumericalBreakdown",
    "RankDeficient",
    "SolveReport",
    "SolverConfig",
    "StabilityTrace",
    "TraceStep",
    "UnknownField",
    "estimate_sigma_min",
    "evaluate_residual",
    "field_indices",
    "from_fixed_point_form",
    "qr_masked_solve",
    "solve",
    "solve_plain",
    "__version__",
]
