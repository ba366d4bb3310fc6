from .cutting import CutError, CutGraph, cut_along_edges, cut_to_discs, shortest_path
from .lscm import DiscPatch, circle_boundary_angles, conformal_energy, lscm_to_disc
from .crossparam import CutPartInstance, UvLocator, cross_parametrize

__all__ = [
    "CutError",
    "CutGraph",
    "cut_along_edges",
    "cut_to_discs",
    "shortest_path",
    "DiscPatch",
    "circle_boundary_angles",
    "conformal_energy",
    "lscm_to_disc",
    "CutPartInstance",
    "UvLocator",
    "cross_parametrize",
]
