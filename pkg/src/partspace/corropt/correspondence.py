"""Correspondence sets: per-shape on-surface positions plus rigid poses."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rigid import fit_rigid


class OnSurfaceError(AssertionError):
    """A correspondence position violated the on-surface invariant."""


@dataclass
class OptimizerConfig:
    """Knobs of the ensemble optimizer (all positive)."""

    mu_l_relative: float = 0.25e-5
    delta: float | None = None          # default: scale-aware, from the initial ensemble
    delta_scale: float = 1e-4           # used when delta is None
    max_iterations: int = 500
    gradient_tolerance: float = 1e-6    # relative to the initial gradient norm
    memory_depth: int = 12
    boundary_weight: float = 1.0
    max_line_search: int = 30
    max_step_cells: float = 2.0         # initial step cap in grid spacings
    optimize_poses: bool = True         # include per-shape Euler updates
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None

    def __post_init__(self):
        for name in ("mu_l_relative", "max_iterations", "gradient_tolerance",
                     "memory_depth", "boundary_weight", "max_line_search",
                     "max_step_cells", "delta_scale"):
            if getattr(self, name) <= 0:
                raise ValueError("%s must be positive" % name)
        if self.delta is not None and self.delta <= 0:
            raise ValueError("delta must be positive")


class CorrespondenceSet:
    """Positions x_i(u_j) for every urshape vertex on every shape's surface.

    Parameters
    ----------
    urshape : TriMesh carrying the shared connectivity
    positions : (n, m, 3) world-frame on-surface positions
    grids : n SdfGrid constraint manifolds
    rotations : (n, 3, 3) O(3) poses (world = R @ model + t)
    translations : (n, 3)
    """

    def __init__(self, urshape, positions, grids, rotations=None, translations=None):
        self.urshape = urshape
        self.positions = np.asarray(positions, dtype=np.float64)
        if self.positions.ndim != 3 or self.positions.shape[2] != 3:
            raise ValueError("positions must be (n, m, 3)")
        if urshape is not None and self.positions.shape[1] != urshape.n_vertices:
            raise ValueError("positions do not match urshape vertex count")
        self.grids = list(grids)
        if len(self.grids) != self.n_shapes:
            raise ValueError("need one SDF grid per shape")
        n = self.n_shapes
        self.rotations = (
            np.tile(np.eye(3), (n, 1, 1)) if rotations is None
            else np.asarray(rotations, dtype=np.float64)
        )
        self.translations = (
            np.zeros((n, 3)) if translations is None
            else np.asarray(translations, dtype=np.float64)
        )
        for i, R in enumerate(self.rotations):
            if np.abs(R @ R.T - np.eye(3)).max() > 1e-8:
                raise ValueError("rotation %d is not orthogonal" % i)

    @property
    def n_shapes(self):
        return self.positions.shape[0]

    @property
    def n_vertices(self):
        return self.positions.shape[1]

    def copy(self):
        return CorrespondenceSet(
            self.urshape,
            self.positions.copy(),
            self.grids,
            self.rotations.copy(),
            self.translations.copy(),
        )

    def model_frame(self):
        """Pose-normalized positions (n, m, 3): R^T (x - t) per shape."""
        out = np.empty_like(self.positions)
        for i in range(self.n_shapes):
            out[i] = (self.positions[i] - self.translations[i]) @ self.rotations[i]
        return out

    def assert_on_surface(self, scale=1.0):
        """Check |d_i(x)| below each grid's tolerance for every position."""
        for i, grid in enumerate(self.grids):
            vals, _, ok = grid.evaluate_masked(self.positions[i])
            tol = scale * grid.surface_tol
            if not ok.all() or np.abs(vals).max() > tol:
                worst = float(np.nanmax(np.abs(vals)))
                raise OnSurfaceError(
                    "shape %d violates on-surface invariant (max |d| = %.3g > %.3g)"
                    % (i, worst, tol)
                )

    def project_all(self):
        """Project every position onto its shape's surface (in place)."""
        for i, grid in enumerate(self.grids):
            self.positions[i] = grid.project_to_surface(self.positions[i])
        return self

    def fit_poses(self, iterations=3):
        """Initial least-squares poses against the ensemble mean (GPA style)."""
        n = self.n_shapes
        Y = self.positions.copy()
        R = np.tile(np.eye(3), (n, 1, 1))
        t = np.zeros((n, 3))
        for _ in range(iterations):
            mean = Y.mean(axis=0)
            for i in range(n):
                Ri, ti = fit_rigid(mean, self.positions[i])
                R[i] = Ri
                t[i] = ti
                Y[i] = (self.positions[i] - ti) @ Ri
        self.rotations = R
        self.translations = t
        return self

    # -- serialization (used by checkpoints and the model container) -------

    def to_arrays(self):
        return {
            "positions": self.positions,
            "rotations": self.rotations.reshape(self.n_shapes, 9),
            "translations": self.translations,
        }

    @classmethod
    def from_arrays(cls, urshape, grids, arrays):
        rot = np.asarray(arrays["rotations"]).reshape(-1, 3, 3)
        return cls(urshape, arrays["positions"], grids, rot, arrays["translations"])
