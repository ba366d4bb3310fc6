"""Cotangent edge weights and the uniform graph-Laplacian mesh regularizer."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .trimesh import MeshError

DEGENERATE_AREA_FRACTION = 1e-12  # of squared bbox diagonal


def cotangent_weights(mesh, clamp=True):
    """Per-edge cotangent weights of a manifold mesh.

    Interior edges get (cot a + cot b) / 2 over the two opposite angles,
    boundary edges the single opposite cotangent halved. Negative sums
    (obtuse configurations) are clamped to zero so downstream linear
    systems stay positive semi-definite.

    Returns
    -------
    edges : (e, 2) int array, sorted unique undirected edges
    weights : (e,) float array
    """
    v, t = mesh.vertices, mesh.triangles
    diag2 = mesh.bbox_diagonal() ** 2
    areas = mesh.triangle_areas()
    bad = np.where(areas <= DEGENERATE_AREA_FRACTION * diag2)[0]
    if bad.size:
        raise MeshError(
            "degenerate triangle %d (area %.3g below threshold)" % (bad[0], areas[bad[0]])
        )
    # cot of the angle at corner k, opposite edge (i, j)
    cots = []
    pairs = []
    for k, (i, j) in ((2, (0, 1)), (0, (1, 2)), (1, (2, 0))):
        a = v[t[:, i]] - v[t[:, k]]
        b = v[t[:, j]] - v[t[:, k]]
        cross = np.linalg.norm(np.cross(a, b), axis=1)
        cots.append(np.einsum("ij,ij->i", a, b) / cross)
        pairs.append(np.sort(t[:, [i, j]], axis=1))
    pairs = np.concatenate(pairs, axis=0)
    cots = np.concatenate(cots)
    edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
    weights = np.zeros(len(edges))
    np.add.at(weights, inverse, 0.5 * cots)
    if clamp:
        weights = np.maximum(weights, 0.0)
    return edges, weights


def cotangent_weight_matrix(mesh, clamp=True):
    """Symmetric sparse matrix W with W[i, j] = cotangent weight of edge (i, j)."""
    edges, w = cotangent_weights(mesh, clamp=clamp)
    n = mesh.n_vertices
    i = np.concatenate([edges[:, 0], edges[:, 1]])
    j = np.concatenate([edges[:, 1], edges[:, 0]])
    return sp.csr_matrix((np.concatenate([w, w]), (i, j)), shape=(n, n))


class GraphLaplacian:
    """Uniform (combinatorial) graph Laplacian energy over an ensemble.

    For each shape the energy of a position array X (m, 3) is

        sum_j (1 / |N_j|) * || sum_{k in N_j} (X_j - X_k) ||^2

    which vanishes exactly when every vertex sits at the centroid of its
    1-ring. The operator is precomputed once from the urshape connectivity.
    """

    def __init__(self, mesh):
        n = mesh.n_vertices
        e = mesh.edges()
        deg = np.zeros(n)
        np.add.at(deg, e[:, 0], 1)
        np.add.at(deg, e[:, 1], 1)
        if np.any(deg == 0):
            raise MeshError("isolated vertex %d has no neighbors" % int(np.where(deg == 0)[0][0]))
        i = np.concatenate([e[:, 0], e[:, 1], np.arange(n)])
        j = np.concatenate([e[:, 1], e[:, 0], np.arange(n)])
        vals = np.concatenate([-np.ones(2 * len(e)), deg])
        L = sp.csr_matrix((vals, (i, j)), shape=(n, n))
        self.L = L
        self.weights = 1.0 / deg
        # quadratic form L^T diag(1/deg) L, shared by energy and gradient
        self.Q = (L.T @ sp.diags(self.weights) @ L).tocsr()

    def energy(self, positions):
        """Energy of one (m, 3) array or a stacked (n, m, 3) ensemble."""
        X = np.asarray(positions, dtype=np.float64)
        single = X.ndim == 2
        if single:
            X = X[None]
        total = 0.0
        for Xi in X:
            r = self.L @ Xi
            total += float(np.sum(self.weights[:, None] * r * r))
        return total

    def energy_gradient(self, positions):
        """(energy, gradient) with the exact analytic gradient 2 L^T W L X."""
        X = np.asarray(positions, dtype=np.float64)
        single = X.ndim == 2
        if single:
            X = X[None]
        grads = np.empty_like(X)
        total = 0.0
        for i, Xi in enumerate(X):
            r = self.L @ Xi
            total += float(np.sum(self.weights[:, None] * r * r))
            grads[i] = 2.0 * (self.L.T @ (self.weights[:, None] * r))
        if single:
            grads = grads[0]
        return total, grads


def laplacian_energy(positions, mesh):
    """Ensemble Laplacian energy and gradient for positions (n, m, 3)."""
    return GraphLaplacian(mesh).energy_gradient(positions)
