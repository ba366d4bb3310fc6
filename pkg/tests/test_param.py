import numpy as np
import pytest

from partspace.mesh import TriMesh
from partspace.param import (
    CutError,
    CutPartInstance,
    conformal_energy,
    cross_parametrize,
    cut_to_discs,
    lscm_to_disc,
)

from conftest import make_annulus, make_hex_fan, make_icosphere, make_square, make_torus, random_rigid


class TestCutting:
    def test_disc_stays_disc(self):
        m = make_square(4)
        cut, origin, graph = cut_to_discs(m)
        assert len(graph) == 0
        assert cut.euler_characteristic() == 1
        assert np.array_equal(origin, np.arange(m.n_vertices))

    def test_annulus_one_cut(self):
        m = make_annulus()
        assert len(m.boundary_loops()) == 2
        cut, origin, graph = cut_to_discs(m)
        assert len(graph) == 1
        assert graph.kinds == ["loop_join"]
        assert cut.euler_characteristic() == 1
        assert len(cut.boundary_loops()) == 1

    def test_closed_sphere_slit(self):
        m = make_icosphere(1)
        cut, origin, graph = cut_to_discs(m, seed_vertex=0)
        assert graph.kinds[0] == "slit"
        assert cut.euler_characteristic() == 1
        assert len(cut.boundary_loops()) == 1

    def test_closed_sphere_needs_seed(self):
        with pytest.raises(CutError, match="seed"):
            cut_to_discs(make_icosphere(1))

    def test_torus_with_hole_two_handle_cuts(self):
        m = make_torus(open_hole=True)
        assert m.genus() == 1
        cut, origin, graph = cut_to_discs(m)
        assert cut.euler_characteristic() == 1
        assert graph.kinds.count("handle") == 2

    def test_disconnected_rejected(self):
        verts = np.array([
            [0, 0, 0], [1, 0, 0], [0, 1, 0],
            [5, 5, 5], [6, 5, 5], [5, 6, 5],
        ], dtype=float)
        tris = np.array([[0, 1, 2], [3, 4, 5]])
        with pytest.raises(CutError, match="disconnected"):
            cut_to_discs(TriMesh(verts, tris))


class TestLscm:
    def test_fan_center_maps_to_origin(self):
        m = make_hex_fan()
        patch = lscm_to_disc(m)
        assert np.linalg.norm(patch.uv[0]) < 1e-10
        r = np.linalg.norm(patch.uv[patch.boundary_loop], axis=1)
        assert np.abs(r - 1).max() < 1e-10

    def test_flat_disc_energy_zero(self):
        # an already-flat fan is conformally embedded by its own coordinates
        m = make_hex_fan()
        patch = lscm_to_disc(m)
        assert patch.conformal_energy() < 1e-10

    def test_boundary_arc_length_angles(self):
        m = make_square(3)
        patch = lscm_to_disc(m, start_vertex=int(m.boundary_loops()[0][0]))
        loop = patch.boundary_loop
        pts = m.vertices[loop]
        seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
        arc = np.concatenate([[0.0], np.cumsum(seg[:-1])])
        expect = 2 * np.pi * arc / seg.sum()
        got = np.arctan2(patch.uv[loop, 1], patch.uv[loop, 0]) % (2 * np.pi)
        got = (got - got[0]) % (2 * np.pi)
        assert np.abs(got[1:] - expect[1:]).max() < 1e-8

    def test_half_perimeter_maps_to_pi(self):
        # square rim: the point at half the perimeter sits at angle pi
        m = make_square(3)
        loop = m.boundary_loops()[0]
        patch = lscm_to_disc(m, start_vertex=int(loop[0]))
        angles = np.arctan2(patch.uv[loop, 1], patch.uv[loop, 0]) % (2 * np.pi)
        angles = (angles - angles[0]) % (2 * np.pi)
        assert angles[len(loop) // 2] == pytest.approx(np.pi, abs=1e-8)

    def test_hemisphere_no_flips(self):
        sphere = make_icosphere(2)
        keep = sphere.triangles[:, :].copy()
        centroids = sphere.vertices[keep].mean(axis=1)
        upper = centroids[:, 2] > 0
        sub, vmap = sphere.submesh(upper)
        patch = lscm_to_disc(sub)
        uv_t = patch.uv[sub.triangles]
        cross = (
            (uv_t[:, 1, 0] - uv_t[:, 0, 0]) * (uv_t[:, 2, 1] - uv_t[:, 0, 1])
            - (uv_t[:, 1, 1] - uv_t[:, 0, 1]) * (uv_t[:, 2, 0] - uv_t[:, 0, 0])
        )
        assert (cross > 0).all() or (cross < 0).all()


class TestCrossParam:
    def test_identical_instances_identity(self):
        meshes = [make_square(4), make_square(4)]
        instances = [CutPartInstance(m) for m in meshes]
        urshape, positions = cross_parametrize(instances)
        assert np.abs(positions[0] - positions[1]).max() < 1e-9
        assert urshape.n_vertices == meshes[0].n_vertices

    def test_rigid_pair_differs_by_motion(self, rng):
        base = make_square(5)
        R, t = random_rigid(rng)
        moved = TriMesh(base.vertices @ R.T + t, base.triangles)
        instances = [CutPartInstance(base), CutPartInstance(moved)]
        urshape, positions = cross_parametrize(instances)
        mapped = positions[0] @ R.T + t
        bbox = base.bbox_diagonal()
        assert np.abs(mapped - positions[1]).max() < 1e-6 * bbox

    def test_composition_roundtrip(self):
        # template -> instance -> template is the identity (bijectivity)
        base = make_square(5)
        warped = TriMesh(
            np.column_stack([
                base.vertices[:, 0] ** 1.0 + 0.2 * base.vertices[:, 1],
                base.vertices[:, 1],
                np.zeros(base.n_vertices),
            ]),
            base.triangles,
        )
        instances = [CutPartInstance(base), CutPartInstance(warped)]
        urshape, positions = cross_parametrize(instances)
        inst1 = instances[1]
        # map template uv through instance 1 twice: the lookup must be a
        # function (deterministic single-valued correspondence)
        uv = instances[0].uv_at_vertices()
        mask = instances[0].on_loop
        p_a = inst1.positions_at(uv, on_circle=mask)
        p_b = inst1.positions_at(uv, on_circle=mask)
        assert np.abs(p_a - p_b).max() < 1e-12
        # and interior template verts land inside instance triangles whose
        # uv maps straight back (bijectivity on the interior)
        interior = ~mask
        for p in uv[interior][:10]:
            ti, w = inst1.locator.locate(p)
            q = w @ inst1.patch.uv[inst1.cut_mesh.triangles[ti]]
            assert np.linalg.norm(q - p) < 1e-6

    def test_sphere_pair_on_surface(self):
        from partspace.implicit import fit_sdf
        from partspace.mesh import OrientedPointCloud

        rng = np.random.default_rng(0)
        d = rng.normal(size=(3000, 3))
        d /= np.linalg.norm(d, axis=1)[:, None]
        grid = fit_sdf(OrientedPointCloud(d, d),
                       bbox=(np.full(3, -1.0), np.full(3, 1.0)), h_fraction=0.05)
        s1 = make_icosphere(2)
        s2 = make_icosphere(2)
        instances = [CutPartInstance(s1, seed_vertex=0), CutPartInstance(s2, seed_vertex=0)]
        urshape, positions = cross_parametrize(instances, grids=[grid, grid])
        for i in range(2):
            vals, _, ok = grid.evaluate_masked(positions[i])
            assert ok.all()
            assert np.abs(vals).max() < grid.surface_tol

    def test_refinement_splits_long_edges(self):
        base = make_square(4)
        # second instance stretched strongly in x: mapped edges get long
        stretched = TriMesh(base.vertices * np.array([3.0, 1.0, 1.0]), base.triangles)
        instances = [CutPartInstance(base), CutPartInstance(stretched)]
        urshape0, positions0 = cross_parametrize(instances, refine_passes=0)
        urshape1, positions1 = cross_parametrize(instances, refine_passes=2)
        assert urshape1.n_vertices > urshape0.n_vertices
        assert positions1.shape[1] == urshape1.n_vertices
        urshape1.validate()
