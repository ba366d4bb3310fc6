"""Pair geometry: boundary-band shape spaces of docked part pairs."""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from ..mesh.trimesh import TriMesh
from ..shapespace.model import build_pca_model


class PairGeometryError(ValueError):
    pass


@dataclass
class SiteCorrespondence:
    """Canonical cyclic boundary correspondence of one docking site.

    loop_a / loop_b are urshape boundary loops of the two part types,
    aligned so loop_a[k] docks onto loop_b[k]. occurrences lists
    (instance index in part_a's set, instance index in part_b's set).
    """

    site_id: str
    part_a: int
    loop_a: np.ndarray
    part_b: int
    loop_b: np.ndarray
    occurrences: list

    def __post_init__(self):
        self.loop_a = np.asarray(self.loop_a, dtype=np.int64)
        self.loop_b = np.asarray(self.loop_b, dtype=np.int64)
        if len(self.loop_a) != len(self.loop_b):
            raise PairGeometryError(
                "docked loops have different vertex counts (%d vs %d); "
                "re-parametrize with matching boundary resolution"
                % (len(self.loop_a), len(self.loop_b))
            )


def align_loops(loop_a, positions_a, loop_b, positions_b):
    """Cyclically align loop_b to loop_a by minimal summed distance.

    positions_* are (m, 3) arrays of the respective part urshapes (e.g. the
    ensemble means). Both orientations of loop_b are tried. Returns the
    reindexed loop_b.
    """
    loop_a = np.asarray(loop_a)
    loop_b = np.asarray(loop_b)
    if len(loop_a) != len(loop_b):
        raise PairGeometryError(
            "docked loops have different vertex counts (%d vs %d)"
            % (len(loop_a), len(loop_b))
        )
    pa = positions_a[loop_a]
    best = None
    for direction in (1, -1):
        lb = loop_b[::direction]
        pb = positions_b[lb]
        for shift in range(len(lb)):
            cost = float(np.sum((pa - np.roll(pb, -shift, axis=0)) ** 2))
            if best is None or cost < best[0]:
                best = (cost, np.roll(lb, -shift))
    return best[1]


def _graph_distances(mesh, positions, sources):
    adj = [[] for _ in range(mesh.n_vertices)]
    for a, b in mesh.edges():
        w = float(np.linalg.norm(positions[a] - positions[b]))
        adj[a].append((b, w))
        adj[b].append((a, w))
    dist = np.full(mesh.n_vertices, np.inf)
    heap = []
    for s in sorted(int(s) for s in sources):
        dist[s] = 0.0
        heapq.heappush(heap, (0.0, s))
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v, w in adj[u]:
            nd = d + w
            if nd < dist[v] - 1e-15:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def band_vertices(mesh, positions, loop, band_radius):
    """Vertices within band_radius graph distance of the loop."""
    dist = _graph_distances(mesh, positions, loop)
    return np.where(dist <= band_radius + 1e-12)[0]


@dataclass
class PairGeometryModel:
    """Glued boundary-band urshape with its own PCA shape space."""

    site_id: str
    mesh: TriMesh
    model: object  # ShapeSpaceModel over the glued band
    band_radius: float
    map_a: np.ndarray  # pair vertex -> part_a urshape vertex (or -1)
    map_b: np.ndarray  # pair vertex -> part_b urshape vertex (or -1)
    training_lambdas: np.ndarray = None  # (n occurrences, d) projections


def extract_pair_geometry(sets, corr, band_radius, delta=None):
    """Build the pair-geometry shape space of one docking site.

    Parameters
    ----------
    sets : dict part type -> CorrespondenceSet (optimized)
    corr : SiteCorrespondence with aligned loops
    band_radius : band width in model units (0 keeps only the loops)

    Returns
    -------
    PairGeometryModel
    """
    if not corr.occurrences:
        raise PairGeometryError("site %s was never observed docked" % corr.site_id)
    set_a = sets[corr.part_a]
    set_b = sets[corr.part_b]
    mean_a = set_a.positions.mean(axis=0)
    mean_b = set_b.positions.mean(axis=0)

    verts_a = band_vertices(set_a.urshape, mean_a, corr.loop_a, band_radius)
    verts_b = band_vertices(set_b.urshape, mean_b, corr.loop_b, band_radius)

    # glue: indices 0..len(verts_a)-1 for side A; side B vertices that are
    # matched boundary copies collapse onto their A partner
    col_a = {int(v): k for k, v in enumerate(verts_a)}
    partner_of_b = {int(b): int(a) for a, b in zip(corr.loop_a, corr.loop_b)}
    col_b = {}
    extra = []
    for v in verts_b:
        v = int(v)
        if v in partner_of_b and partner_of_b[v] in col_a:
            col_b[v] = col_a[partner_of_b[v]]
        else:
            col_b[v] = len(verts_a) + len(extra)
            extra.append(v)
    n_pair = len(verts_a) + len(extra)

    map_a = np.full(n_pair, -1, dtype=np.int64)
    map_b = np.full(n_pair, -1, dtype=np.int64)
    for v, c in col_a.items():
        map_a[c] = v
    for v, c in col_b.items():
        map_b[c] = v

    tris = []
    for mesh, cols in ((set_a.urshape, col_a), (set_b.urshape, col_b)):
        vset = set(cols)
        for t in mesh.triangles:
            if all(int(x) in vset for x in t):
                tris.append([cols[int(x)] for x in t])
    # positions per occurrence: sides averaged on the glued boundary
    ensemble = []
    for (ia, ib) in corr.occurrences:
        acc = np.zeros((n_pair, 3))
        cnt = np.zeros(n_pair)
        for v, c in col_a.items():
            acc[c] += set_a.positions[ia][v]
            cnt[c] += 1
        for v, c in col_b.items():
            acc[c] += set_b.positions[ib][v]
            cnt[c] += 1
        ensemble.append(acc / cnt[:, None])
    ensemble = np.stack(ensemble)

    mesh = TriMesh(ensemble.mean(axis=0),
                   np.array(tris, dtype=np.int64).reshape(-1, 3),
                   validate=False)
    if len(ensemble) >= 2:
        model = build_pca_model(ensemble, mesh, delta=delta)
    else:
        from ..shapespace.model import ShapeSpaceModel

        model = ShapeSpaceModel(mesh, ensemble[0],
                                np.zeros((0, n_pair, 3)), np.zeros(0),
                                delta if delta else 1e-6)
    training_lambdas = np.stack([model.project(row) for row in ensemble])
    return PairGeometryModel(corr.site_id, mesh, model, float(band_radius),
                             map_a, map_b, training_lambdas)


def default_band_radius(sets, corr, fraction=1.0 / 3.0):
    """Fraction of the smaller docked part's diameter (bounding box diagonal
    of its mean positions)."""
    diams = []
    for p in (corr.part_a, corr.part_b):
        mean = sets[p].positions.mean(axis=0)
        diams.append(float(np.linalg.norm(mean.max(axis=0) - mean.min(axis=0))))
    return fraction * min(diams)
