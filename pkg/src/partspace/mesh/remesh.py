"""Incremental isotropic remeshing: split / collapse / flip / smooth passes.

The target is a uniform edge length; after a few passes edge lengths fall
inside [0.5, 1.5] x target. Boundary polylines are preserved: boundary
edges may be split (midpoint stays on the segment) but never collapsed or
flipped, and boundary vertices do not move during smoothing. Part labels
propagate to child triangles.
"""
from __future__ import annotations

import numpy as np

from .trimesh import TriMesh

SPLIT_FACTOR = 4.0 / 3.0
COLLAPSE_FACTOR = 4.0 / 5.0
SMOOTH_ITERATIONS = 5
SMOOTH_DAMPING = 0.5


class _EditMesh:
    """Mutable triangle soup with adjacency rebuilt on demand."""

    def __init__(self, mesh):
        self.v = [p.copy() for p in mesh.vertices]
        self.t = [tuple(tri) for tri in mesh.triangles]
        if mesh.part_labels is None:
            self.labels = None
        else:
            self.labels = [int(l) for l in mesh.part_labels]
        self.alive = [True] * len(self.t)

    def compact(self):
        tris = [self.t[i] for i in range(len(self.t)) if self.alive[i]]
        labels = None
        if self.labels is not None:
            labels = [self.labels[i] for i in range(len(self.t)) if self.alive[i]]
        used = sorted({i for tri in tris for i in tri})
        remap = {old: new for new, old in enumerate(used)}
        verts = np.array([self.v[i] for i in used])
        tris = np.array([[remap[a], remap[b], remap[c]] for a, b, c in tris], dtype=np.int64)
        labels = None if labels is None else np.array(labels, dtype=np.int64)
        return TriMesh(verts, tris, labels)

    def edge_faces(self):
        """Map undirected edge -> list of live triangle indices."""
        ef = {}
        for ti, tri in enumerate(self.t):
            if not self.alive[ti]:
                continue
            for k in range(3):
                e = tuple(sorted((tri[k], tri[(k + 1) % 3])))
                ef.setdefault(e, []).append(ti)
        return ef

    def vertex_faces(self):
        vf = {}
        for ti, tri in enumerate(self.t):
            if not self.alive[ti]:
                continue
            for i in tri:
                vf.setdefault(i, []).append(ti)
        return vf


def _boundary_vertices(ef):
    out = set()
    for e, faces in ef.items():
        if len(faces) == 1:
            out.update(e)
    return out


def _split_pass(em, target, max_sweeps=50):
    high = SPLIT_FACTOR * target
    total = 0
    for _ in range(max_sweeps):
        ef = em.edge_faces()
        # longest first keeps the pass deterministic and effective
        order = sorted(ef, key=lambda e: -np.linalg.norm(em.v[e[0]] - em.v[e[1]]))
        unsafe = set()  # edges of triangles already rewritten this sweep
        changed = 0
        for e in order:
            a, b = e
            if np.linalg.norm(em.v[a] - em.v[b]) <= high:
                break
            if e in unsafe:
                continue
            faces = [ti for ti in ef[e] if em.alive[ti]]
            if not faces:
                continue
            mid = len(em.v)
            em.v.append(0.5 * (em.v[a] + em.v[b]))
            for ti in faces:
                tri = em.t[ti]
                c = [x for x in tri if x not in (a, b)][0]
                ia = tri.index(a)
                # keep orientation: replace a->b edge halves
                if tri[(ia + 1) % 3] == b:
                    t1 = (a, mid, c)
                    t2 = (mid, b, c)
                else:
                    t1 = (a, c, mid)
                    t2 = (mid, c, b)
                em.alive[ti] = False
                em.t.append(t1)
                em.t.append(t2)
                em.alive.extend([True, True])
                if em.labels is not None:
                    em.labels.extend([em.labels[ti], em.labels[ti]])
                for k in range(3):
                    unsafe.add(tuple(sorted((tri[k], tri[(k + 1) % 3]))))
            changed += 1
        total += changed
        if not changed:
            break
    return total


def _collapse_ok(em, ef, a, b, target):
    """Link condition plus edge-length guards for collapsing a into b."""
    e = tuple(sorted((a, b)))
    faces = [ti for ti in ef.get(e, []) if em.alive[ti]]
    if len(faces) != 2:
        return False
    ring_a = set()
    ring_b = set()
    for edge, fl in ef.items():
        if not any(em.alive[ti] for ti in fl):
            continue
        if a in edge:
            ring_a.add(edge[0] if edge[1] == a else edge[1])
        if b in edge:
            ring_b.add(edge[0] if edge[1] == b else edge[1])
    opposite = {x for ti in faces for x in em.t[ti] if x not in (a, b)}
    if ring_a & ring_b != opposite:
        return False  # collapse would pinch the surface
    high = SPLIT_FACTOR * target
    for n in ring_a - {b}:
        if np.linalg.norm(em.v[n] - em.v[b]) > high:
            return False
    return True


def _collapse_pass(em, target, protected):
    low = COLLAPSE_FACTOR * target
    ef = em.edge_faces()
    vf = em.vertex_faces()
    order = sorted(ef, key=lambda e: np.linalg.norm(em.v[e[0]] - em.v[e[1]]))
    touched = set()
    changed = 0
    for e in order:
        a, b = e
        if np.linalg.norm(em.v[a] - em.v[b]) >= low:
            break
        if a in touched or b in touched or a in protected or b in protected:
            continue
        if not _collapse_ok(em, ef, a, b, target):
            continue
        # collapse a onto the midpoint stored in b
        em.v[b] = 0.5 * (em.v[a] + em.v[b])
        dead = [ti for ti in ef[e] if em.alive[ti]]
        for ti in dead:
            em.alive[ti] = False
        for ti in vf.get(a, []):
            if not em.alive[ti]:
                continue
            tri = em.t[ti]
            if b in tri:
                em.alive[ti] = False
                continue
            em.t[ti] = tuple(b if x == a else x for x in tri)
            vf.setdefault(b, []).append(ti)
        touched.update((a, b))
        touched.update(x for ti in dead for x in em.t[ti])
        changed += 1
        # adjacency is stale after a collapse; rebuild lazily
        ef = em.edge_faces()
        vf = em.vertex_faces()
    return changed


def _valence_map(em):
    val = {}
    for e in em.edge_faces():
        val[e[0]] = val.get(e[0], 0) + 1
        val[e[1]] = val.get(e[1], 0) + 1
    return val


def _flip_pass(em, protected):
    ef = em.edge_faces()
    val = _valence_map(em)

    def target_val(v):
        return 4 if v in protected else 6

    changed = 0
    for e, faces in list(ef.items()):
        faces = [ti for ti in faces if em.alive[ti]]
        if len(faces) != 2:
            continue
        a, b = e
        if a in protected and b in protected:
            continue
        t1, t2 = em.t[faces[0]], em.t[faces[1]]
        # adjacency may be stale after earlier flips
        if not (a in t1 and b in t1 and a in t2 and b in t2):
            continue
        c = [x for x in t1 if x not in e][0]
        d = [x for x in t2 if x not in e][0]
        if c == d:
            continue
        cd = tuple(sorted((c, d)))
        if cd in ef and any(em.alive[ti] for ti in ef[cd]):
            continue  # flip would create a duplicate edge
        def dev(va, vb, vc, vd):
            return sum((val.get(x, 0) + dx - target_val(x)) ** 2
                       for x, dx in ((va, -1), (vb, -1), (vc, 1), (vd, 1)))
        before = sum((val.get(x, 0) - target_val(x)) ** 2 for x in (a, b, c, d))
        after = dev(a, b, c, d)
        if after >= before:
            continue
        # geometric guard: flipped triangles keep a sane normal
        pa, pb, pc, pd = em.v[a], em.v[b], em.v[c], em.v[d]
        n_old = np.cross(pb - pa, pc - pa) + np.cross(pa - pb, pd - pb)
        n1 = np.cross(pd - pc, pa - pc)
        n2 = np.cross(pc - pd, pb - pd)
        if np.dot(n1, n_old) <= 0 or np.dot(n2, n_old) <= 0:
            continue
        ia = t1.index(a)
        if t1[(ia + 1) % 3] == b:
            new1 = (a, d, c)
            new2 = (b, c, d)
        else:
            new1 = (a, c, d)
            new2 = (b, d, c)
        em.t[faces[0]] = new1
        em.t[faces[1]] = new2
        for x, dx in ((a, -1), (b, -1), (c, 1), (d, 1)):
            val[x] = val.get(x, 0) + dx
        ef = em.edge_faces()
        changed += 1
    return changed


def _smooth(em, protected, iterations=SMOOTH_ITERATIONS):
    """Tangential Laplacian smoothing of interior vertices."""
    for _ in range(iterations):
        ef = em.edge_faces()
        nbrs = {}
        for (a, b) in ef:
            nbrs.setdefault(a, []).append(b)
            nbrs.setdefault(b, []).append(a)
        vf = em.vertex_faces()
        normals = {}
        for vi, faces in vf.items():
            n = np.zeros(3)
            for ti in faces:
                a, b, c = em.t[ti]
                n += np.cross(em.v[b] - em.v[a], em.v[c] - em.v[a])
            ln = np.linalg.norm(n)
            normals[vi] = n / ln if ln > 0 else n
        new_positions = {}
        for vi, nb in nbrs.items():
            if vi in protected:
                continue
            centroid = np.mean([em.v[x] for x in nb], axis=0)
            d = SMOOTH_DAMPING * (centroid - em.v[vi])
            n = normals[vi]
            d = d - np.dot(d, n) * n  # tangential component only
            new_positions[vi] = em.v[vi] + d
        for vi, p in new_positions.items():
            em.v[vi] = p


def uniform_remesh(mesh, target_edge_length, passes=5):
    """Remesh toward uniform edge length; labels propagate, topology preserved.

    Operations that would break manifoldness are skipped, never raised.
    """
    if target_edge_length <= 0:
        raise ValueError("targetEdgeLength must be positive")
    em = _EditMesh(mesh)
    protected = _boundary_vertices(em.edge_faces())
    for _ in range(passes):
        changed = _split_pass(em, target_edge_length)
        protected = _boundary_vertices(em.edge_faces())
        changed += _collapse_pass(em, target_edge_length, protected)
        changed += _flip_pass(em, protected)
        _smooth(em, protected)
        if not changed:
            break
    return em.compact()
