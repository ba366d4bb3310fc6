"""Cross-parametrization of cut part instances over a common urshape.

The first instance's (remeshed, cut) mesh serves as the template: its uv
embedding defines the lookup coordinates, and welding its cut duplicates
back together recovers the part urshape connectivity. Every other instance
is sampled at the template's uv coordinates through its own disc embedding,
giving bijective (piecewise) initial correspondences; welded positions are
averaged and optionally projected onto the instance's implicit surface.
"""
from __future__ import annotations

import numpy as np

from ..mesh.trimesh import TriMesh
from .cutting import cut_to_discs
from .lscm import lscm_to_disc


class LookupError3(ValueError):
    """A uv query point could not be located in the embedding."""


class UvLocator:
    """Point-in-triangle lookup in a 2D embedding with a bucket grid."""

    def __init__(self, uv, triangles, snap_tol=1e-6):
        self.uv = uv
        self.triangles = triangles
        self.snap_tol = snap_tol
        tri_uv = uv[triangles]
        self.lo = tri_uv.min(axis=(0, 1)) - 1e-9
        hi = tri_uv.max(axis=(0, 1)) + 1e-9
        self.cell = max((hi - self.lo).max() / max(int(np.sqrt(len(triangles))), 1), 1e-9)
        self.buckets = {}
        mins = np.floor((tri_uv.min(axis=1) - self.lo) / self.cell).astype(int)
        maxs = np.floor((tri_uv.max(axis=1) - self.lo) / self.cell).astype(int)
        for ti in range(len(triangles)):
            for i in range(mins[ti, 0], maxs[ti, 0] + 1):
                for j in range(mins[ti, 1], maxs[ti, 1] + 1):
                    self.buckets.setdefault((i, j), []).append(ti)

    def _bary(self, ti, p):
        a, b, c = self.uv[self.triangles[ti]]
        M = np.array([[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]])
        det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
        if abs(det) < 1e-300:
            return None
        inv = np.array([[M[1, 1], -M[0, 1]], [-M[1, 0], M[0, 0]]]) / det
        st = inv @ (p - a)
        return np.array([1.0 - st[0] - st[1], st[0], st[1]])

    def locate(self, p):
        """(triangle index, barycentric coords); snaps within tolerance."""
        key = tuple(np.floor((p - self.lo) / self.cell).astype(int))
        best = None
        for di in (0, -1, 1):
            for dj in (0, -1, 1):
                for ti in self.buckets.get((key[0] + di, key[1] + dj), ()):
                    w = self._bary(ti, p)
                    if w is None:
                        continue
                    slack = -min(w.min(), 0.0)
                    if slack == 0.0:
                        return ti, w
                    if best is None or slack < best[0]:
                        best = (slack, ti, w)
        if best is not None and best[0] <= self.snap_tol:
            w = np.clip(best[2], 0.0, None)
            return best[1], w / w.sum()
        # full scan fallback for robustness near the hull
        for ti in range(len(self.triangles)):
            w = self._bary(ti, p)
            if w is not None:
                slack = -min(w.min(), 0.0)
                if best is None or slack < best[0]:
                    best = (slack, ti, w)
        if best is not None and best[0] <= self.snap_tol:
            w = np.clip(best[2], 0.0, None)
            return best[1], w / w.sum()
        raise LookupError3(
            "uv point %s lies outside the embedding (slack %.3g)"
            % (p.tolist(), best[0] if best else float("nan"))
        )


class CutPartInstance:
    """One part instance after cutting and disc parametrization."""

    def __init__(self, mesh, seed_vertex=None, start_vertex=None):
        self.source = mesh
        cut, origin, graph = cut_to_discs(mesh, seed_vertex=seed_vertex)
        self.cut_mesh = cut
        self.origin = origin
        self.cut_graph = graph
        loop = cut.boundary_loops()[0]
        start = start_vertex
        if start is None:
            # default: the first cut path's start, mapped into the cut mesh
            if len(graph):
                target = graph.paths[0][0]
                cands = np.where(origin == target)[0]
                cands = cands[np.isin(cands, loop)]
                start = int(cands[0]) if len(cands) else int(loop[0])
            else:
                start = int(loop[0])
        self.patch = lscm_to_disc(cut, loop, start)
        self.locator = UvLocator(self.patch.uv, cut.triangles)
        # angle (= relative arc length) of the boundary loop vertices
        self.loop = self.patch.boundary_loop
        uvb = self.patch.uv[self.loop]
        ang = np.arctan2(uvb[:, 1], uvb[:, 0]) % (2 * np.pi)
        self.loop_angles = (ang - ang[0]) % (2 * np.pi)
        self.loop_angles[0] = 0.0
        self.on_loop = np.zeros(cut.n_vertices, dtype=bool)
        self.on_loop[self.loop] = True

    def boundary_position_at(self, angle):
        """3D boundary point at a circle angle via arc-length interpolation."""
        a = float(angle) % (2 * np.pi)
        angles = self.loop_angles
        k = int(np.searchsorted(angles, a, side="right") - 1)
        k = max(k, 0)
        k2 = (k + 1) % len(angles)
        a0 = angles[k]
        a1 = angles[k2] if k2 != 0 else 2 * np.pi
        t = 0.0 if a1 <= a0 else (a - a0) / (a1 - a0)
        p0 = self.cut_mesh.vertices[self.loop[k]]
        p1 = self.cut_mesh.vertices[self.loop[k2]]
        return (1.0 - t) * p0 + t * p1

    def positions_at(self, uv_points, on_circle=None):
        """3D positions at template uv coordinates.

        Interior points use barycentric lookup in the uv embedding; points
        flagged on_circle map through the boundary arc-length
        correspondence (chord polygons do not cover the arc).
        """
        uv_points = np.atleast_2d(np.asarray(uv_points, dtype=np.float64))
        out = np.empty((len(uv_points), 3))
        for k, p in enumerate(uv_points):
            if on_circle is not None and on_circle[k]:
                out[k] = self.boundary_position_at(np.arctan2(p[1], p[0]))
            else:
                ti, w = self.locator.locate(p)
                out[k] = w @ self.cut_mesh.vertices[self.cut_mesh.triangles[ti]]
        return out

    def uv_at_vertices(self):
        return self.patch.uv


def weld_template(instance):
    """Urshape connectivity of the template: the pre-cut mesh, plus the map
    cut-vertex -> urshape vertex."""
    origin = instance.origin
    n_orig = int(origin.max()) + 1
    urshape = TriMesh(
        instance.source.vertices[:n_orig].copy(),
        origin[instance.cut_mesh.triangles],
        instance.cut_mesh.part_labels,
    )
    return urshape, origin


def cross_parametrize(instances, grids=None, refine_passes=0, split_factor=1.5):
    """Initial dense correspondences for instances of one part type.

    Parameters
    ----------
    instances : list of CutPartInstance, cut consistently; the first one
        acts as the template
    grids : optional list of SdfGrid, one per instance, for projecting
        welded and refined positions onto the data surfaces
    refine_passes : edge-split passes for undersampled regions

    Returns
    -------
    (urshape, positions (n, m, 3)): the common urshape mesh and one
    position array per instance.
    """
    if not instances:
        raise ValueError("no instances")
    template = instances[0]
    urshape, origin = weld_template(template)
    uv = template.uv_at_vertices()
    m = urshape.n_vertices

    positions = np.empty((len(instances), m, 3))
    for i, inst in enumerate(instances):
        if i == 0:
            mapped = template.cut_mesh.vertices
        else:
            mapped = inst.positions_at(uv, on_circle=template.on_loop)
        acc = np.zeros((m, 3))
        cnt = np.zeros(m)
        np.add.at(acc, origin, mapped)
        np.add.at(cnt, origin, 1.0)
        positions[i] = acc / cnt[:, None]
        if grids is not None:
            positions[i] = grids[i].project_to_surface(positions[i])

    if refine_passes:
        urshape, positions = _refine_undersampled(
            urshape, positions, uv, origin, instances, grids,
            refine_passes, split_factor,
        )
    return urshape, positions


def _refine_undersampled(urshape, positions, uv, origin, instances, grids,
                         passes, split_factor):
    """Split urshape edges whose mapped length exceeds the global mean by
    split_factor in any instance; new vertices are uv midpoints mapped
    through every instance (and projected when grids are given)."""
    # uv per urshape vertex: first cut copy wins (copies share arc position
    # only approximately; refinement skips edges with ambiguous uv)
    uv_of = {}
    for cut_v, ur_v in enumerate(origin):
        uv_of.setdefault(int(ur_v), uv[cut_v])
    verts = [v for v in urshape.vertices]
    tris = [list(t) for t in urshape.triangles]
    pos = [list(P) for P in positions]

    for _ in range(passes):
        mesh = TriMesh(np.array(verts), np.array(tris, dtype=np.int64), validate=False)
        e = mesh.edges()
        lengths = np.stack([
            np.linalg.norm(np.array(P)[e[:, 0]] - np.array(P)[e[:, 1]], axis=1)
            for P in pos
        ])
        mean_len = lengths.mean()
        too_long = lengths.max(axis=0) > split_factor * mean_len
        if not too_long.any():
            break
        edge_face = {}
        for ti, t in enumerate(tris):
            for k in range(3):
                edge_face.setdefault(tuple(sorted((t[k], t[(k + 1) % 3]))), []).append(ti)
        handled = set()
        for ei in np.where(too_long)[0]:
            a, b = int(e[ei, 0]), int(e[ei, 1])
            if a not in uv_of or b not in uv_of:
                continue
            key = (min(a, b), max(a, b))
            faces = [ti for ti in edge_face.get(key, []) if ti not in handled]
            if len(faces) != len(edge_face.get(key, [])) or not faces:
                continue
            mid_uv = 0.5 * (uv_of[a] + uv_of[b])
            new_id = len(verts)
            uv_of[new_id] = mid_uv
            verts.append(0.5 * (np.array(verts[a]) + np.array(verts[b])))
            for i, inst in enumerate(instances):
                try:
                    p = inst.positions_at([mid_uv])[0]
                except LookupError3:
                    p = 0.5 * (np.array(pos[i][a]) + np.array(pos[i][b]))
                if grids is not None:
                    p = grids[i].project_to_surface(p)
                pos[i].append(p)
            for ti in faces:
                t = tris[ti]
                c = [x for x in t if x not in (a, b)][0]
                ia = t.index(a)
                if t[(ia + 1) % 3] == b:
                    tris[ti] = [a, new_id, c]
                    tris.append([new_id, b, c])
                else:
                    tris[ti] = [a, c, new_id]
                    tris.append([new_id, c, b])
                handled.add(ti)
                handled.add(len(tris) - 1)
    urshape = TriMesh(np.array(verts), np.array(tris, dtype=np.int64))
    return urshape, np.array([np.array(P) for P in pos])
