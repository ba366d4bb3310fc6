"""partspace: part-based statistical shape spaces.

Learns compact shape spaces from coarsely annotated triangle meshes by
optimizing dense correspondences for compactness, and synthesizes new
composite shapes with a variational gradient-domain solver.
"""

__version__ = "0.1.0"
