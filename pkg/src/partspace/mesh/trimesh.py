"""Indexed triangle mesh with per-face part labels and connectivity queries."""
from __future__ import annotations

import numpy as np


class MeshError(ValueError):
    """Raised for invalid mesh structure (bad indices, non-manifoldness, ...)."""


class TriMesh:
    """Orientable 2-manifold triangle mesh, possibly with boundary.

    Parameters
    ----------
    vertices : (n, 3) float array
        Vertex positions in model units.
    triangles : (t, 3) int array
        Vertex index triples, consistently oriented.
    part_labels : (t,) int array, optional
        Per-triangle part type. When given it must cover all triangles.
    validate : bool
        Run index and manifoldness checks (default True).
    """

    def __init__(self, vertices, triangles, part_labels=None, validate=True):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError("vertices must be (n, 3)")
        if self.triangles.size and (self.triangles.ndim != 2 or self.triangles.shape[1] != 3):
            raise MeshError("triangles must be (t, 3)")
        if self.triangles.size == 0:
            self.triangles = self.triangles.reshape(0, 3)
        if part_labels is not None:
            part_labels = np.asarray(part_labels, dtype=np.int64)
            if part_labels.shape != (len(self.triangles),):
                raise MeshError(
                    "part labels must cover all triangles: got %d labels for %d triangles"
                    % (part_labels.size, len(self.triangles))
                )
        self.part_labels = part_labels
        self._cache = {}
        if validate:
            self.validate()

    # -- basic counts ------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def copy(self):
        labels = None if self.part_labels is None else self.part_labels.copy()
        return TriMesh(self.vertices.copy(), self.triangles.copy(), labels, validate=False)

    # -- validation --------------------------------------------------------

    def validate(self):
        t = self.triangles
        if t.size:
            bad = np.where((t < 0) | (t >= self.n_vertices))[0]
            if bad.size:
                raise MeshError(
                    "triangle %d references out-of-range vertex index %s"
                    % (bad[0], t[bad[0]].tolist())
                )
            degenerate = np.where(
                (t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])
            )[0]
            if degenerate.size:
                raise MeshError(
                    "triangle %d repeats a vertex index: %s"
                    % (degenerate[0], t[degenerate[0]].tolist())
                )
        self._check_manifold()

    def _check_manifold(self):
        """Every undirected edge in <= 2 triangles; orientation consistent."""
        if not self.n_triangles:
            return
        he = self.halfedges()
        # directed edge repeated => inconsistent orientation or non-manifold fin
        order = np.lexsort((he[:, 1], he[:, 0]))
        s = he[order]
        dup = np.where((s[:-1] == s[1:]).all(axis=1))[0]
        if dup.size:
            raise MeshError(
                "non-manifold or inconsistently oriented edge (%d, %d)"
                % (s[dup[0], 0], s[dup[0], 1])
            )
        # undirected edge in more than two triangles
        und = np.sort(he, axis=1)
        order = np.lexsort((und[:, 1], und[:, 0]))
        s = und[order]
        same = (s[:-1] == s[1:]).all(axis=1)
        if same.size >= 2:
            triple = np.where(same[:-1] & same[1:])[0]
            if triple.size:
                raise MeshError(
                    "edge (%d, %d) shared by more than two triangles"
                    % (s[triple[0], 0], s[triple[0], 1])
                )

    # -- connectivity ------------------------------------------------------

    def halfedges(self):
        """All directed edges, one row (src, dst) per triangle corner."""
        t = self.triangles
        return np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=0)

    def edges(self):
        """Unique undirected edges as a sorted (e, 2) int array."""
        key = "edges"
        if key not in self._cache:
            und = np.sort(self.halfedges(), axis=1)
            self._cache[key] = np.unique(und, axis=0)
        return self._cache[key]

    def edge_lengths(self):
        e = self.edges()
        return np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)

    def boundary_edges(self):
        """Undirected edges incident to exactly one triangle."""
        key = "boundary_edges"
        if key not in self._cache:
            und = np.sort(self.halfedges(), axis=1)
            uniq, counts = np.unique(und, axis=0, return_counts=True)
            self._cache[key] = uniq[counts == 1]
        return self._cache[key]

    def boundary_vertices(self):
        be = self.boundary_edges()
        return np.unique(be)

    def vertex_neighbors(self):
        """List of sorted neighbor-index arrays, one per vertex."""
        key = "vertex_neighbors"
        if key not in self._cache:
            e = self.edges()
            nbr = [[] for _ in range(self.n_vertices)]
            for a, b in e:
                nbr[a].append(b)
                nbr[b].append(a)
            self._cache[key] = [np.array(sorted(x), dtype=np.int64) for x in nbr]
        return self._cache[key]

    def boundary_loops(self):
        """Ordered vertex loops along the boundary.

        Each loop follows the orientation induced by the triangles (boundary
        halfedges are traversed src->dst). Loops are returned sorted by
        (length descending, min vertex index) for determinism.
        """
        he = self.halfedges()
        und = np.sort(he, axis=1)
        uniq, inv, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
        on_boundary = counts[inv] == 1
        bhe = he[on_boundary]
        nxt = {int(a): int(b) for a, b in bhe}
        loops = []
        seen = set()
        for start in sorted(nxt):
            if start in seen:
                continue
            loop = [start]
            seen.add(start)
            cur = nxt[start]
            while cur != start:
                if cur in seen:
                    raise MeshError("boundary walk revisited vertex %d" % cur)
                loop.append(cur)
                seen.add(cur)
                cur = nxt[cur]
            loops.append(np.array(loop, dtype=np.int64))
        loops.sort(key=lambda l: (-len(l), int(l.min())))
        return loops

    # -- differential / integral quantities --------------------------------

    def triangle_corners(self):
        v, t = self.vertices, self.triangles
        return v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]

    def triangle_normals(self, normalized=True):
        a, b, c = self.triangle_corners()
        n = np.cross(b - a, c - a)
        if normalized:
            ln = np.linalg.norm(n, axis=1)
            ln[ln == 0] = 1.0
            n = n / ln[:, None]
        return n

    def triangle_areas(self):
        a, b, c = self.triangle_corners()
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def area(self):
        return float(self.triangle_areas().sum())

    def bbox(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def bbox_diagonal(self):
        lo, hi = self.bbox()
        return float(np.linalg.norm(hi - lo))

    def euler_characteristic(self):
        return self.n_vertices - len(self.edges()) + self.n_triangles

    def genus(self):
        """Genus of a connected mesh: chi = 2 - 2g - (#boundary loops)."""
        b = len(self.boundary_loops())
        chi = self.euler_characteristic()
        g2 = 2 - b - chi
        if g2 < 0 or g2 % 2:
            raise MeshError("inconsistent topology: chi=%d, boundary loops=%d" % (chi, b))
        return g2 // 2

    def connected_components(self):
        """Vertex component labels via union-find over edges."""
        parent = np.arange(self.n_vertices)

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a, b in self.edges():
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb
        return np.array([find(i) for i in range(self.n_vertices)])

    def submesh(self, triangle_mask):
        """Extract the triangles selected by a boolean mask.

        Returns (mesh, vertex_map) where vertex_map[i] is the original index
        of new vertex i.
        """
        tris = self.triangles[triangle_mask]
        used = np.unique(tris)
        remap = np.full(self.n_vertices, -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        labels = None if self.part_labels is None else self.part_labels[triangle_mask]
        return TriMesh(self.vertices[used], remap[tris], labels, validate=False), used


class OrientedPointCloud:
    """Surface samples with unit normals."""

    def __init__(self, points, normals):
        self.points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        self.normals = np.ascontiguousarray(normals, dtype=np.float64).reshape(-1, 3)
        if len(self.points) != len(self.normals):
            raise ValueError("points and normals must have equal length")
        if len(self.normals):
            nrm = np.linalg.norm(self.normals, axis=1)
            if np.any(np.abs(nrm - 1.0) > 1e-8):
                raise ValueError("normals must have unit length within 1e-8")

    def __len__(self):
        return len(self.points)

    def bbox(self):
        return self.points.min(axis=0), self.points.max(axis=0)

    def bbox_diagonal(self):
        lo, hi = self.bbox()
        return float(np.linalg.norm(hi - lo))
