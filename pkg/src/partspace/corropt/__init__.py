from .rigid import RigidFitError, euler_rotation, fit_rigid
from .correspondence import CorrespondenceSet, OnSurfaceError, OptimizerConfig
from .energy import EnsembleEnergy, SoftConstraintTerm, compute_mu_l
from .lbfgs import OptimizationError, OptimizeResult, optimize_ensemble
from .boundary import (
    BoundaryTerm,
    DockedSiteBinding,
    Polyline,
    boundary_energy,
    optimize_boundaries,
)

__all__ = [
    "RigidFitError",
    "euler_rotation",
    "fit_rigid",
    "CorrespondenceSet",
    "OnSurfaceError",
    "OptimizerConfig",
    "EnsembleEnergy",
    "SoftConstraintTerm",
    "compute_mu_l",
    "OptimizationError",
    "OptimizeResult",
    "optimize_ensemble",
    "BoundaryTerm",
    "DockedSiteBinding",
    "Polyline",
    "boundary_energy",
    "optimize_boundaries",
]
