"""Synthetic generative families used by optimizer and acceptance tests."""
import numpy as np

from partspace.corropt import CorrespondenceSet
from partspace.implicit import fit_sdf
from partspace.mesh import OrientedPointCloud, TriMesh

from conftest import make_icosphere, make_square


def ellipsoid_cloud(axes, n=4000, seed=0):
    """Analytic samples of the ellipsoid sum((x_k/a_k)^2) = 1."""
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    pts = d * axes
    normals = pts / axes**2
    normals /= np.linalg.norm(normals, axis=1)[:, None]
    return OrientedPointCloud(pts, normals)


def triangle_normals(triangles, positions):
    """Unnormalized triangle normals of an (n, m, 3) ensemble."""
    t = triangles
    return np.cross(positions[:, t[:, 1]] - positions[:, t[:, 0]],
                    positions[:, t[:, 2]] - positions[:, t[:, 0]])


def ellipsoid_family(n_shapes=8, subdivisions=3, drift_fraction=0.10,
                     h_fraction=0.04, axis_b=1.15, seed=11):
    """A 1-parameter linear ellipsoid family with exact correspondences,
    corrupted by smooth tangential drift (max displacement a fixed fraction
    of the bounding box diagonal).

    The drift mixes shared smooth vector fields with per-shape coefficients
    orthogonal to both the constant and the family parameter, so the
    corruption inflates the shape-space spectrum without moving the
    ensemble mean or masquerading as the true variation mode.

    Returns (corrupted CorrespondenceSet, ground-truth positions (n, m, 3)).
    """
    urshape = make_icosphere(subdivisions)
    sphere = urshape.vertices
    ts = np.linspace(-0.35, 0.35, n_shapes)
    axes_all = [np.array([1.0, axis_b, 1.0 + t]) for t in ts]
    grids, gt, exacts, nrms = [], [], [], []
    for i, axes in enumerate(axes_all):
        cloud = ellipsoid_cloud(axes, seed=100 + i)
        grid = fit_sdf(cloud, bbox=(-axes, axes), h_fraction=h_fraction)
        grids.append(grid)
        exact = sphere * axes
        gt.append(grid.project_to_surface(exact))
        nrm = exact / axes**2
        nrm /= np.linalg.norm(nrm, axis=1)[:, None]
        exacts.append(exact)
        nrms.append(nrm)

    rng = np.random.default_rng(seed)
    n_fields = 3
    fields = []
    for _ in range(n_fields):
        f = np.zeros_like(sphere)
        for _ in range(3):
            freq = rng.uniform(0.4, 1.0, size=3)
            phase = rng.uniform(0, 2 * np.pi, size=3)
            f += rng.normal(size=3) * np.sin(sphere * freq + phase)
        # flatten magnitudes so the drift is strong almost everywhere
        eps = 0.4 * np.linalg.norm(f, axis=1).mean()
        f = f / np.sqrt(np.einsum("vk,vk->v", f, f) + eps**2)[:, None]
        fields.append(f)
    t_dir = ts - ts.mean()
    t_dir /= np.linalg.norm(t_dir)
    ones = np.ones(n_shapes) / np.sqrt(n_shapes)
    coeffs = []
    for _ in range(n_fields):
        c = rng.normal(size=n_shapes)
        c -= (c @ ones) * ones
        c -= (c @ t_dir) * t_dir
        c /= np.abs(c).max()
        coeffs.append(c)

    drifts = []
    for i in range(n_shapes):
        f = sum(coeffs[k][i] * fields[k] for k in range(n_fields))
        coef = np.einsum("ij,ij->i", f, nrms[i])
        drifts.append(f - coef[:, None] * nrms[i])
    diag = max(np.linalg.norm(2 * a) for a in axes_all)
    peak = max(np.linalg.norm(f, axis=1).max() for f in drifts)
    corrupted = []
    for i in range(n_shapes):
        f = drifts[i] * (drift_fraction * diag / peak)
        corrupted.append(grids[i].project_to_surface(exacts[i] + f))
    cset = CorrespondenceSet(urshape, np.stack(corrupted), grids).fit_poses()
    return cset, np.stack(gt)


def plane_grid_sdf(z=0.0, extent=2.0, h_fraction=0.05, seed=0):
    """SDF of the plane z=const over a square patch."""
    rng = np.random.default_rng(seed)
    n = 4000
    pts = np.column_stack([
        rng.uniform(-extent, extent, n),
        rng.uniform(-extent, extent, n),
        np.full(n, z),
    ])
    normals = np.tile([0.0, 0.0, 1.0], (n, 1))
    lo = np.array([-extent, -extent, z - 0.3])
    hi = np.array([extent, extent, z + 0.3])
    return fit_sdf(OrientedPointCloud(pts, normals), bbox=(lo, hi),
                   h_fraction=h_fraction)


def square_patch(n=6, origin=(0.0, 0.0), size=1.0):
    """Grid mesh of an axis-aligned square in the z=0 plane."""
    mesh = make_square(n)
    verts = mesh.vertices.copy()
    verts[:, 0] = origin[0] + size * verts[:, 0]
    verts[:, 1] = origin[1] + size * verts[:, 1]
    return TriMesh(verts, mesh.triangles)


def make_open_box(n=3, lo=(-1.0, -0.5, -0.5), hi=(0.0, 0.5, 0.5),
                  skip=(0, +1.0), label=1):
    """Grid-meshed box surface missing one face (skip = (axis, sign))."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
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

    for axis in range(3):
        for sign in (1.0, -1.0):
            if (axis, sign) == (skip[0], skip[1]):
                continue
            u_axis = (axis + 1) % 3
            v_axis = (axis + 2) % 3
            us = np.linspace(lo[u_axis], hi[u_axis], n + 1)
            vs = np.linspace(lo[v_axis], hi[v_axis], n + 1)
            for i in range(n):
                for j in range(n):
                    ids = []
                    for (u, v) in ((us[i], vs[j]), (us[i + 1], vs[j]),
                                   (us[i + 1], vs[j + 1]), (us[i], vs[j + 1])):
                        p = np.zeros(3)
                        p[axis] = hi[axis] if sign > 0 else lo[axis]
                        p[u_axis] = u
                        p[v_axis] = v
                        ids.append(vid(p))
                    a, b, c, d = ids
                    if sign > 0:
                        tris += [[a, b, c], [a, c, d]]
                    else:
                        tris += [[a, c, b], [a, d, c]]
                    labels += [label, label]
    return TriMesh(np.array(verts), np.array(tris), np.array(labels))


def box_family(n_shapes=4, n=3):
    """Two open boxes docked along the square rim at x=0; part 1's length
    and part 2's length vary linearly across training shapes.

    Returns (part meshes dict, positions dict (n, m, 3), composite meshes).
    """
    part1 = make_open_box(n=n, lo=(-1.0, -0.5, -0.5), hi=(0.0, 0.5, 0.5),
                          skip=(0, +1.0), label=1)
    part2 = make_open_box(n=n, lo=(0.0, -0.5, -0.5), hi=(1.0, 0.5, 0.5),
                          skip=(0, -1.0), label=2)
    lengths1 = np.linspace(0.8, 1.4, n_shapes)
    lengths2 = np.linspace(1.3, 0.7, n_shapes)
    positions = {1: [], 2: []}
    composites = []
    for i in range(n_shapes):
        p1 = part1.vertices.copy()
        p1[:, 0] *= lengths1[i]
        p2 = part2.vertices.copy()
        p2[:, 0] *= lengths2[i]
        positions[1].append(p1)
        positions[2].append(p2)
        # composite labeled mesh for rule learning
        all_v = np.vstack([p1, p2])
        all_t = np.vstack([part1.triangles, part2.triangles + part1.n_vertices])
        all_l = np.concatenate([part1.part_labels, part2.part_labels])
        comp = TriMesh(all_v, all_t, all_l, validate=False)
        composites.append(_weld_duplicate_vertices(comp))
    positions = {k: np.stack(v) for k, v in positions.items()}
    return {1: part1, 2: part2}, positions, composites


def _weld_duplicate_vertices(mesh, tol=1e-9):
    key = np.round(mesh.vertices / tol).astype(np.int64)
    _, first, inverse = np.unique(key, axis=0, return_index=True,
                                  return_inverse=True)
    verts = mesh.vertices[first]
    tris = inverse[mesh.triangles]
    return TriMesh(verts, tris, mesh.part_labels)


def box_family_models(n_shapes=4, n=3, band_fraction=1.0 / 3.0):
    """Shape-space and pair models of the docked box family.

    Returns (part_models, pair_models, site_corrs, rules, part meshes,
    positions, composites).
    """
    from partspace.partmodel import (
        SiteCorrespondence,
        align_loops,
        default_band_radius,
        extract_pair_geometry,
        learn_docking_rules,
    )
    from partspace.corropt import CorrespondenceSet
    from partspace.shapespace import build_pca_model

    meshes, positions, composites = box_family(n_shapes=n_shapes, n=n)
    rules, occurrences = learn_docking_rules(composites)
    part_models = {
        p: build_pca_model(positions[p], meshes[p]) for p in meshes
    }
    # per-part correspondence sets without SDFs (positions are exact)
    sets = {
        p: CorrespondenceSet(meshes[p], positions[p],
                             [_DummyGrid()] * n_shapes)
        for p in meshes
    }
    loop1 = meshes[1].boundary_loops()[0]
    loop2_raw = meshes[2].boundary_loops()[0]
    loop2 = align_loops(loop1, positions[1].mean(axis=0),
                        loop2_raw, positions[2].mean(axis=0))
    site_id = sorted(rules.sites)[0]
    corr = SiteCorrespondence(site_id, 1, loop1, 2, loop2,
                              occurrences=[(i, i) for i in range(n_shapes)])
    band = default_band_radius(sets, corr, band_fraction)
    pair_models = {site_id: extract_pair_geometry(sets, corr, band)}
    site_corrs = {site_id: corr}
    return part_models, pair_models, site_corrs, rules, meshes, positions, composites


class _DummyGrid:
    """Stand-in constraint manifold for fixtures built with exact
    correspondences (no SDF available or needed)."""

    spacing = 1.0
    surface_tol = 1e-9

    def evaluate_masked(self, points):
        pts = np.atleast_2d(points)
        return (np.zeros(len(pts)), np.zeros((len(pts), 3)),
                np.ones(len(pts), dtype=bool))


def write_sphere_toy_set(root, subdivisions=2, radii=(1.0, 1.15), seed_vertex=3):
    """Two labeled spheres plus annotation and config on disk; returns the
    config path. Used by the pipeline determinism tests."""
    import json
    from pathlib import Path

    from partspace.mesh import save_ply

    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    names = []
    for i, r in enumerate(radii):
        base = make_icosphere(subdivisions, radius=r)
        mesh = TriMesh(base.vertices, base.triangles,
                       np.ones(base.n_triangles, dtype=np.int64))
        name = "sphere%d.ply" % i
        save_ply(root / name, mesh)
        names.append(name)
    annotation = {
        "shapes": [
            {"mesh": name, "landmarks": {"seed": {"vertex": seed_vertex}}}
            for name in names
        ]
    }
    (root / "annotation.json").write_text(json.dumps(annotation, indent=1))
    config = """\
[input]
meshes = [%s]
annotation = "annotation.json"

[remesh]
enabled = true
passes = 2

[sdf]
h_fraction = 0.06

[param]
refine_passes = 0

[optimize]
mu_l_relative = 1e-2
delta_scale = 1e-3
max_iterations = 80
gradient_tolerance = 1e-5

[pipeline]
seed = 7
out_dir = "out"
polish = true
""" % ", ".join('"%s"' % n for n in names)
    cfg_path = root / "pipeline.toml"
    cfg_path.write_text(config)
    return cfg_path


def box_family_container(tmpdir=None):
    """ModelContainer of the docked box family (no pipeline run needed)."""
    from partspace.pipeline import ModelContainer

    (part_models, pair_models, site_corrs, rules,
     meshes, positions, composites) = box_family_models()
    meta = {"sigmaBdrFraction": 1.0 / 3.0, "partTypes": [1, 2], "seed": 0,
            "muLRelative": 0.25e-5, "bandFraction": 1.0 / 3.0,
            "varianceCut": 0.99}
    return ModelContainer(part_models, pair_models, site_corrs, rules,
                          meta=meta, provenance={"config": "", "inputs": {}},
                          correspondences=positions)
