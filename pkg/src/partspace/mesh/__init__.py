from .trimesh import MeshError, OrientedPointCloud, TriMesh
from .io import ParseError, load_mesh, save_obj, save_ply
from .laplacian import (
    GraphLaplacian,
    cotangent_weight_matrix,
    cotangent_weights,
    laplacian_energy,
)
from .remesh import uniform_remesh
from .sampling import sample_surface

__all__ = [
    "MeshError",
    "OrientedPointCloud",
    "TriMesh",
    "ParseError",
    "load_mesh",
    "save_obj",
    "save_ply",
    "GraphLaplacian",
    "cotangent_weight_matrix",
    "cotangent_weights",
    "laplacian_energy",
    "uniform_remesh",
    "sample_surface",
]
