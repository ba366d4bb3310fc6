from .gram import (
    GramSpectrum,
    as_ensemble,
    center_ensemble,
    covariance_eigenvalues,
    gram_matrix,
)
from .entropy import (
    default_delta,
    entropy_energy,
    entropy_energy_gradient,
    entropy_gradient,
)
from .model import ModelSupportError, ShapeSpaceModel, build_pca_model

__all__ = [
    "GramSpectrum",
    "center_ensemble",
    "covariance_eigenvalues",
    "gram_matrix",
    "default_delta",
    "entropy_energy",
    "entropy_energy_gradient",
    "entropy_gradient",
    "ModelSupportError",
    "ShapeSpaceModel",
    "build_pca_model",
]
