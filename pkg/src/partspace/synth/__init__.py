from .problem import (
    Constraint,
    SynthesisError,
    SynthesisProblem,
    assemble_problem,
    blend_weight,
)
from .solve import SynthesisResult, apply_edit, solve_synthesis

__all__ = [
    "Constraint",
    "SynthesisError",
    "SynthesisProblem",
    "assemble_problem",
    "blend_weight",
    "SynthesisResult",
    "apply_edit",
    "solve_synthesis",
]
