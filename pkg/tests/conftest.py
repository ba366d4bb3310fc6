"""Shared geometry builders for the test suite."""
import numpy as np
import pytest

from partspace.mesh import TriMesh


def make_square(n=2):
    """Regular grid over the unit square in the z=0 plane, n x n vertices."""
    xs = np.linspace(0.0, 1.0, n)
    vv, uu = np.meshgrid(xs, xs, indexing="ij")
    verts = np.stack([uu.ravel(), vv.ravel(), np.zeros(n * n)], axis=1)
    tris = []
    for i in range(n - 1):
        for j in range(n - 1):
            a = i * n + j
            b = a + 1
            c = a + n
            d = c + 1
            tris.append([a, b, d])
            tris.append([a, d, c])
    return TriMesh(verts, np.array(tris))


def make_hex_fan(center=(0.0, 0.0, 0.0), radius=1.0):
    """Six equilateral triangles around a center vertex."""
    angles = np.arange(6) * np.pi / 3.0
    ring = np.stack([radius * np.cos(angles), radius * np.sin(angles), np.zeros(6)], axis=1)
    verts = np.vstack([np.asarray(center, dtype=float)[None, :], ring + np.asarray(center)])
    tris = np.array([[0, 1 + i, 1 + (i + 1) % 6] for i in range(6)])
    return TriMesh(verts, tris)


def make_icosphere(subdivisions=2, radius=1.0):
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=float,
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    tris = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
    verts = list(verts)
    cache = {}

    def midpoint(a, b):
        key = (min(a, b), max(a, b))
        if key not in cache:
            m = (verts[a] + verts[b]) / 2.0
            m /= np.linalg.norm(m)
            cache[key] = len(verts)
            verts.append(m)
        return cache[key]

    for _ in range(subdivisions):
        new_tris = []
        for a, b, c in tris:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_tris += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        tris = new_tris
    v = np.array(verts) * radius
    return TriMesh(v, np.array(tris))


def make_cube(n=4, size=1.0, labels_by_face=False):
    """Axis-aligned cube surface meshed with n x n quads per face."""
    verts = []
    tris = []
    labels = []
    vert_ids = {}

    def vid(p):
        key = tuple(np.round(p, 12))
        if key not in vert_ids:
            vert_ids[key] = len(verts)
            verts.append(np.array(p))
        return vert_ids[key]

    faces = [
        (0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0), (2, 1.0), (2, -1.0),
    ]
    grid = np.linspace(-size / 2, size / 2, n + 1)
    for label, (axis, sign) in enumerate(faces, start=1):
        for i in range(n):
            for j in range(n):
                corners2d = [
                    (grid[i], grid[j]), (grid[i + 1], grid[j]),
                    (grid[i + 1], grid[j + 1]), (grid[i], grid[j + 1]),
                ]
                ids = []
                for (u, v) in corners2d:
                    p = np.zeros(3)
                    p[axis] = sign * size / 2
                    p[(axis + 1) % 3] = u
                    p[(axis + 2) % 3] = v
                    ids.append(vid(p))
                a, b, c, d = ids
                if sign > 0:
                    quad = [[a, b, c], [a, c, d]]
                else:
                    quad = [[a, c, b], [a, d, c]]
                tris += quad
                labels += [label, label]
    part_labels = np.array(labels) if labels_by_face else None
    return TriMesh(np.array(verts), np.array(tris), part_labels)


def make_annulus(n_seg=24, r_in=0.5, r_out=1.0):
    """Flat annulus in the z=0 plane (two boundary loops)."""
    angles = np.arange(n_seg) * 2 * np.pi / n_seg
    inner = np.stack([r_in * np.cos(angles), r_in * np.sin(angles), np.zeros(n_seg)], axis=1)
    outer = np.stack([r_out * np.cos(angles), r_out * np.sin(angles), np.zeros(n_seg)], axis=1)
    verts = np.vstack([inner, outer])
    tris = []
    for i in range(n_seg):
        j = (i + 1) % n_seg
        tris.append([i, n_seg + i, n_seg + j])
        tris.append([i, n_seg + j, j])
    return TriMesh(verts, np.array(tris))


def make_torus(n_major=16, n_minor=8, R=1.0, r=0.3, open_hole=True):
    """Torus; with open_hole one triangle is removed to create a boundary."""
    verts = []
    for i in range(n_major):
        a = 2 * np.pi * i / n_major
        for j in range(n_minor):
            b = 2 * np.pi * j / n_minor
            verts.append([
                (R + r * np.cos(b)) * np.cos(a),
                (R + r * np.cos(b)) * np.sin(a),
                r * np.sin(b),
            ])
    tris = []
    for i in range(n_major):
        for j in range(n_minor):
            a = i * n_minor + j
            b = i * n_minor + (j + 1) % n_minor
            c = ((i + 1) % n_major) * n_minor + j
            d = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
            tris.append([a, c, b])
            tris.append([b, c, d])
    tris = np.array(tris)
    if open_hole:
        tris = tris[1:]
    return TriMesh(np.array(verts), tris)


def random_rigid(rng):
    """Random rotation (det +1) and translation."""
    A = rng.normal(size=(3, 3))
    Q, _ = np.linalg.qr(A)
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    t = rng.normal(size=3)
    return Q, t


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
