from .grid import OutsideDomainError, ProjectionError, SdfGrid
from .fit import SdfFitError, fit_sdf
from .kernels import backend_name

__all__ = [
    "OutsideDomainError",
    "ProjectionError",
    "SdfGrid",
    "SdfFitError",
    "fit_sdf",
    "backend_name",
]
