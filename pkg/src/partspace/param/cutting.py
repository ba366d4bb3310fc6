"""Cutting parts into topological discs.

Strategy: join boundary loops pairwise along shortest edge paths, slit
closed genus-0 surfaces from a seed vertex, and open handles with shortest
non-separating boundary-to-boundary arcs until every piece is a disc
(Euler characteristic 1).
"""
from __future__ import annotations

import heapq

import numpy as np

from ..mesh.trimesh import MeshError, TriMesh


class CutError(ValueError):
    pass


class CutGraph:
    """Record of the applied cuts: vertex paths in the original indexing."""

    def __init__(self):
        self.paths = []        # list of np arrays of original vertex indices
        self.kinds = []        # 'loop_join' | 'slit' | 'handle'

    def add(self, path, kind):
        self.paths.append(np.asarray(path, dtype=np.int64))
        self.kinds.append(kind)

    def __len__(self):
        return len(self.paths)


def _adjacency(mesh):
    adj = [[] for _ in range(mesh.n_vertices)]
    for a, b in mesh.edges():
        w = float(np.linalg.norm(mesh.vertices[a] - mesh.vertices[b]))
        adj[a].append((b, w))
        adj[b].append((a, w))
    return adj


def _dijkstra(adj, sources, targets=None, forbidden=()):
    """Shortest path from any source; returns (dist, parent)."""
    n = len(adj)
    dist = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    heap = []
    forbidden = set(forbidden)
    for s in sorted(sources):
        dist[s] = 0.0
        heapq.heappush(heap, (0.0, s))
    target_set = set(targets) if targets is not None else None
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        if target_set is not None and u in target_set:
            return dist, parent
        for v, w in adj[u]:
            if v in forbidden:
                continue
            nd = d + w
            if nd < dist[v] - 1e-15:
                dist[v] = nd
                parent[v] = u
                heapq.heappush(heap, (nd, v))
    return dist, parent


def _walk_back(parent, end):
    path = [end]
    while parent[path[-1]] >= 0:
        path.append(int(parent[path[-1]]))
    return path[::-1]


def shortest_path(mesh, start, goal):
    adj = _adjacency(mesh)
    dist, parent = _dijkstra(adj, [start], targets=[goal])
    if not np.isfinite(dist[goal]):
        raise CutError("vertices %d and %d are not connected" % (start, goal))
    return _walk_back(parent, goal)


def cut_along_edges(mesh, cut_edges):
    """Duplicate vertices along a set of edges, opening the surface there.

    For each vertex incident to cut edges, its triangle fan is partitioned
    into wedges separated by cut edges (and existing boundary gaps); each
    wedge beyond the first gets a fresh vertex copy. Returns
    (mesh, origin) with origin[i] = original index of new vertex i.
    """
    cut = {tuple(sorted(e)) for e in cut_edges}
    tris = [list(t) for t in mesh.triangles]
    verts = [v for v in mesh.vertices]
    origin = list(range(mesh.n_vertices))

    touched = sorted({v for e in cut for v in e})
    for v in touched:
        faces = [ti for ti, t in enumerate(tris) if v in t]
        # group v's fan into wedges: triangles are wedge-adjacent when they
        # share an edge (v, u) that is not being cut
        edge_faces = {}
        for ti in faces:
            t = tris[ti]
            i = t.index(v)
            for u in (t[(i + 1) % 3], t[(i + 2) % 3]):
                edge_faces.setdefault(u, []).append(ti)
        adj = {ti: [] for ti in faces}
        for u, fl in edge_faces.items():
            if tuple(sorted((v, u))) in cut or len(fl) != 2:
                continue
            adj[fl[0]].append(fl[1])
            adj[fl[1]].append(fl[0])
        remaining = set(faces)
        wedges = []
        while remaining:
            seed = min(remaining)
            remaining.discard(seed)
            wedge = [seed]
            stack = [seed]
            while stack:
                ti = stack.pop()
                for tj in adj[ti]:
                    if tj in remaining:
                        remaining.discard(tj)
                        wedge.append(tj)
                        stack.append(tj)
            wedges.append(sorted(wedge))
        for wedge in wedges[1:]:
            new_id = len(verts)
            verts.append(verts[v].copy())
            origin.append(origin[v])
            for ti in wedge:
                tris[ti] = [new_id if x == v else x for x in tris[ti]]

    labels = None if mesh.part_labels is None else mesh.part_labels.copy()
    out = TriMesh(np.array(verts), np.array(tris, dtype=np.int64), labels)
    return out, np.array(origin, dtype=np.int64)


def _path_edges(path):
    return [(path[i], path[i + 1]) for i in range(len(path) - 1)]


def _loop_centroid(mesh, loop):
    return mesh.vertices[loop].mean(axis=0)


def _find_nonseparating_arc(mesh):
    """Shortest interior arc between boundary vertices whose cut keeps the
    mesh connected and raises the Euler characteristic."""
    bverts = set(mesh.boundary_vertices().tolist())
    if not bverts:
        raise CutError("handle cut requires a boundary (slit first)")
    adj = _adjacency(mesh)
    dist, parent = _dijkstra(adj, sorted(bverts))
    boundary_edges = {tuple(sorted(e)) for e in mesh.boundary_edges()}
    candidates = []
    for a, b in mesh.edges():
        e = (min(a, b), max(a, b))
        if e in boundary_edges:
            continue
        if not (np.isfinite(dist[a]) and np.isfinite(dist[b])):
            continue
        candidates.append((dist[a] + dist[b] + np.linalg.norm(
            mesh.vertices[a] - mesh.vertices[b]), a, b))
    candidates.sort()
    for _, a, b in candidates:
        pa = _walk_back(parent, a)
        pb = _walk_back(parent, b)
        path = pa + pb[::-1]
        if len(set(path)) != len(path):
            continue  # self-intersecting arc
        interior = path[1:-1]
        if any(p in bverts for p in interior):
            continue
        cut, origin = cut_along_edges(mesh, _path_edges(path))
        comp = cut.connected_components()
        if len(np.unique(comp[np.unique(cut.triangles)])) > 1:
            continue
        if cut.euler_characteristic() > mesh.euler_characteristic():
            return path
    raise CutError("no non-separating arc found")


def cut_to_discs(part, seed_vertex=None):
    """Cut a connected manifold part into topological discs.

    Returns (disc mesh, origin map, CutGraph). The result stays a single
    connected piece whose Euler characteristic is 1; the original vertex of
    every disc vertex is available through the origin map.
    """
    comp = part.connected_components()
    used = np.unique(part.triangles)
    if len(np.unique(comp[used])) > 1:
        raise CutError("part is disconnected")
    mesh = part.copy()
    origin_total = np.arange(mesh.n_vertices)
    graph = CutGraph()

    def compose(origin_new):
        nonlocal origin_total
        origin_total = origin_total[origin_new]

    # no boundary at all: open a slit from the seed to the graph-farthest vertex
    if not len(mesh.boundary_edges()):
        if seed_vertex is None:
            raise CutError("closed part needs a seed vertex for the slit cut")
        adj = _adjacency(mesh)
        dist, parent = _dijkstra(adj, [int(seed_vertex)])
        far = int(np.argmax(np.where(np.isfinite(dist), dist, -1.0)))
        path = _walk_back(parent, far)
        graph.add(origin_total[path], "slit")
        mesh, origin = cut_along_edges(mesh, _path_edges(path))
        compose(origin)

    # join boundary loops until one remains
    for _ in range(64):
        loops = mesh.boundary_loops()
        if len(loops) <= 1:
            break
        # connect the loop pair with minimal centroid distance
        cents = [_loop_centroid(mesh, l) for l in loops]
        best = None
        for i in range(len(loops)):
            for j in range(i + 1, len(loops)):
                d = float(np.linalg.norm(cents[i] - cents[j]))
                if best is None or d < best[0]:
                    best = (d, i, j)
        _, i, j = best
        adj = _adjacency(mesh)
        dist, parent = _dijkstra(adj, sorted(loops[i].tolist()),
                                 targets=sorted(loops[j].tolist()))
        reach = [v for v in loops[j] if np.isfinite(dist[v])]
        if not reach:
            raise CutError("boundary loops are not connected")
        end = min(reach, key=lambda v: (dist[v], v))
        path = _walk_back(parent, int(end))
        graph.add(origin_total[path], "loop_join")
        mesh, origin = cut_along_edges(mesh, _path_edges(path))
        compose(origin)
    else:
        raise CutError("loop joining did not terminate")

    # open handles until the piece is a disc
    for _ in range(64):
        if mesh.euler_characteristic() == 1:
            break
        path = _find_nonseparating_arc(mesh)
        graph.add(origin_total[path], "handle")
        mesh, origin = cut_along_edges(mesh, _path_edges(path))
        compose(origin)
    else:
        raise CutError("handle cutting did not terminate")

    if mesh.euler_characteristic() != 1:
        raise CutError("cutting finished with chi=%d" % mesh.euler_characteristic())
    return mesh, origin_total, graph
