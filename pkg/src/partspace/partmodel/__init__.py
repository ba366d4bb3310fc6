from .docking import (
    DockingError,
    DockingOccurrence,
    DockingRule,
    DockingSite,
    learn_docking_rules,
    part_topology_signature,
)
from .graph import PartEdge, PartGraph, PartGraphError, PartNode, validate_part_graph
from .pairgeom import (
    PairGeometryError,
    PairGeometryModel,
    SiteCorrespondence,
    align_loops,
    band_vertices,
    default_band_radius,
    extract_pair_geometry,
)

__all__ = [
    "DockingError",
    "DockingOccurrence",
    "DockingRule",
    "DockingSite",
    "learn_docking_rules",
    "part_topology_signature",
    "PartEdge",
    "PartGraph",
    "PartGraphError",
    "PartNode",
    "validate_part_graph",
    "PairGeometryError",
    "PairGeometryModel",
    "SiteCorrespondence",
    "align_loops",
    "band_vertices",
    "default_band_radius",
    "extract_pair_geometry",
]
