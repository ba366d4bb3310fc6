"""Blue-noise-like uniform surface sampling with oriented normals."""
from __future__ import annotations

import numpy as np

from .trimesh import OrientedPointCloud

REJECTION_RADIUS = 0.75  # fraction of requested spacing
OVERSAMPLE = 12


def _random_on_triangles(mesh, count, rng):
    areas = mesh.triangle_areas()
    probs = areas / areas.sum()
    tri = rng.choice(mesh.n_triangles, size=count, p=probs)
    r1 = np.sqrt(rng.random(count))
    r2 = rng.random(count)
    a, b, c = mesh.triangle_corners()
    pts = (1 - r1)[:, None] * a[tri] + (r1 * (1 - r2))[:, None] * b[tri] + (r1 * r2)[:, None] * c[tri]
    return pts, tri


class _HashGrid:
    def __init__(self, cell):
        self.cell = cell
        self.buckets = {}

    def key(self, p):
        return tuple(np.floor(p / self.cell).astype(np.int64))

    def has_neighbor_within(self, p, radius):
        k = self.key(p)
        r2 = radius * radius
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    for q in self.buckets.get((k[0] + dx, k[1] + dy, k[2] + dz), ()):
                        d = p - q
                        if d @ d < r2:
                            return True
        return False

    def insert(self, p):
        self.buckets.setdefault(self.key(p), []).append(p)


def sample_surface(mesh, spacing, seed=0):
    """Poisson-disk style sampling with inter-point distance ~ spacing.

    Candidates are triangle centroids (largest first, guaranteeing at least
    one sample) followed by area-weighted random points; greedy dart
    throwing rejects candidates closer than 0.75 x spacing to an accepted
    one. Normals come from the host triangle.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    rng = np.random.default_rng(seed)
    areas = mesh.triangle_areas()
    order = np.argsort(-areas, kind="stable")
    a, b, c = mesh.triangle_corners()
    centroids = (a + b + c) / 3.0
    n_random = int(OVERSAMPLE * mesh.area() / spacing**2)
    rand_pts, rand_tri = _random_on_triangles(mesh, max(n_random, 1), rng)
    cand_pts = np.concatenate([centroids[order], rand_pts])
    cand_tri = np.concatenate([order, rand_tri])
    normals = mesh.triangle_normals()

    radius = REJECTION_RADIUS * spacing
    grid = _HashGrid(cell=radius)
    out_pts = []
    out_nrm = []
    for p, ti in zip(cand_pts, cand_tri):
        if out_pts and grid.has_neighbor_within(p, radius):
            continue
        grid.insert(p)
        out_pts.append(p)
        out_nrm.append(normals[ti])
    return OrientedPointCloud(np.array(out_pts), np.array(out_nrm))
