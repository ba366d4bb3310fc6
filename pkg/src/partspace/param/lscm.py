"""Least-squares conformal maps onto the closed unit disc.

Boundary vertices are pinned to the unit circle at angles proportional to
their 3D arc length from a start vertex; the interior minimizes the
Cauchy-Riemann residual per triangle as one sparse least-squares system.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from ..mesh.trimesh import MeshError


class DiscPatch:
    """Disc-topology mesh with its unit-circle parametrization."""

    def __init__(self, mesh, boundary_loop, start_vertex, uv):
        self.mesh = mesh
        self.boundary_loop = np.asarray(boundary_loop, dtype=np.int64)
        self.start_vertex = int(start_vertex)
        self.uv = np.asarray(uv, dtype=np.float64)
        if mesh.euler_characteristic() != 1:
            raise MeshError("patch is not a disc (chi=%d)" % mesh.euler_characteristic())
        r = np.linalg.norm(self.uv[self.boundary_loop], axis=1)
        if np.abs(r - 1.0).max() > 1e-8:
            raise MeshError("boundary uv not on the unit circle")

    def conformal_energy(self):
        return conformal_energy(self.mesh, self.uv)


def circle_boundary_angles(mesh, loop, start_vertex):
    """Angles in [0, 2pi) proportional to relative arc length from the start."""
    loop = np.asarray(loop, dtype=np.int64)
    where = np.where(loop == start_vertex)[0]
    if not where.size:
        raise ValueError("start vertex %d is not on the boundary loop" % start_vertex)
    loop = np.roll(loop, -int(where[0]))
    pts = mesh.vertices[loop]
    seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    total = seg.sum()
    arc = np.concatenate([[0.0], np.cumsum(seg[:-1])])
    return loop, 2.0 * np.pi * arc / total


def _triangle_gradients(mesh):
    """Per-triangle 2x3 gradient operators in a local orthonormal frame."""
    a, b, c = mesh.triangle_corners()
    e1 = b - a
    x_len = np.linalg.norm(e1, axis=1)
    xhat = e1 / x_len[:, None]
    n = np.cross(e1, c - a)
    n_len = np.linalg.norm(n, axis=1)
    if np.any(n_len < 1e-300):
        raise MeshError("degenerate triangle in parametrization")
    nhat = n / n_len[:, None]
    yhat = np.cross(nhat, xhat)
    # local 2D coordinates
    px = np.zeros_like(x_len)
    qx = x_len
    rx = np.einsum("ij,ij->i", c - a, xhat)
    ry = np.einsum("ij,ij->i", c - a, yhat)
    area2 = qx * ry  # twice the area
    # hat-function gradients: g_i = rot90(opposite edge) / (2A), local coords
    P = np.stack([np.zeros_like(qx), np.zeros_like(qx)], axis=1)
    Q = np.stack([qx, np.zeros_like(qx)], axis=1)
    R = np.stack([rx, ry], axis=1)
    def rot90(v):
        return np.stack([-v[:, 1], v[:, 0]], axis=1)
    gP = rot90(R - Q)
    gQ = rot90(P - R)
    gR = rot90(Q - P)
    G = np.stack([gP, gQ, gR], axis=2) / area2[:, None, None]  # (t, 2, 3)
    return G, 0.5 * area2


def conformal_energy(mesh, uv):
    """Integrated Cauchy-Riemann residual of a uv embedding."""
    G, areas = _triangle_gradients(mesh)
    u = uv[mesh.triangles, 0]
    v = uv[mesh.triangles, 1]
    gu = np.einsum("tkc,tc->tk", G, u)
    gv = np.einsum("tkc,tc->tk", G, v)
    res = gu + np.stack([-gv[:, 1], gv[:, 0]], axis=1)
    return float(np.sum(areas[:, None] * res * res))


def lscm_to_disc(mesh, boundary_loop=None, start_vertex=None):
    """Parametrize a disc patch over the closed unit disc.

    The full boundary is pinned (arc-length correspondence on the circle);
    the interior solves the conformal least-squares system.
    """
    if mesh.euler_characteristic() != 1:
        raise MeshError("patch is not a disc (chi=%d)" % mesh.euler_characteristic())
    loops = mesh.boundary_loops()
    if boundary_loop is None:
        boundary_loop = loops[0]
    if start_vertex is None:
        start_vertex = int(boundary_loop[0])
    loop, angles = circle_boundary_angles(mesh, boundary_loop, start_vertex)

    n = mesh.n_vertices
    uv = np.zeros((n, 2))
    uv[loop, 0] = np.cos(angles)
    uv[loop, 1] = np.sin(angles)
    is_pinned = np.zeros(n, dtype=bool)
    is_pinned[loop] = True
    free = np.where(~is_pinned)[0]
    if len(free):
        col_of = -np.ones(n, dtype=np.int64)
        col_of[free] = np.arange(len(free))
        G, areas = _triangle_gradients(mesh)
        w = np.sqrt(areas)
        # rows: for each triangle, 2 residual components over (u, v) unknowns
        rows, cols, vals = [], [], []
        rhs_rows = []
        nf = len(free)
        t_idx = mesh.triangles
        for ti in range(mesh.n_triangles):
            for comp in range(2):
                r = 2 * ti + comp
                b_val = 0.0
                for corner in range(3):
                    vid = t_idx[ti, corner]
                    # u coefficient: G[comp]; v coefficient: rot90 -> (-G[1], G[0])
                    cu = G[ti, comp, corner]
                    cv = -G[ti, 1, corner] if comp == 0 else G[ti, 0, corner]
                    for coef, offset, uv_comp in ((cu, 0, 0), (cv, nf, 1)):
                        if is_pinned[vid]:
                            b_val -= w[ti] * coef * uv[vid, uv_comp]
                        else:
                            rows.append(r)
                            cols.append(col_of[vid] + offset)
                            vals.append(w[ti] * coef)
                rhs_rows.append((r, b_val))
        A = sp.csr_matrix((vals, (rows, cols)), shape=(2 * mesh.n_triangles, 2 * nf))
        b = np.zeros(2 * mesh.n_triangles)
        for r, v_ in rhs_rows:
            b[r] = v_
        AtA = (A.T @ A).tocsc()
        Atb = A.T @ b
        try:
            x = spsolve(AtA, Atb)
        except RuntimeError as exc:
            raise MeshError("singular conformal system: %s" % exc)
        if not np.all(np.isfinite(x)):
            raise MeshError("singular conformal system (non-finite solution)")
        uv[free, 0] = x[:nf]
        uv[free, 1] = x[nf:]
    return DiscPatch(mesh, loop, start_vertex, uv)
