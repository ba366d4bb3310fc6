import numpy as np
import pytest

from partspace.corropt import (
    CorrespondenceSet,
    OptimizerConfig,
    Polyline,
    RigidFitError,
    boundary_energy,
    fit_rigid,
    optimize_ensemble,
)
from partspace.corropt.energy import EnsembleEnergy
from partspace.corropt.rigid import euler_rotation, euler_rotation_derivatives
from partspace.implicit import fit_sdf
from partspace.mesh import OrientedPointCloud
from partspace.shapespace import gram_matrix

from conftest import make_icosphere, random_rigid
from fixtures import ellipsoid_family


class TestFitRigid:
    def test_identity(self, rng):
        pts = rng.normal(size=(20, 3))
        R, t = fit_rigid(pts, pts)
        assert np.abs(R - np.eye(3)).max() < 1e-12
        assert np.abs(t).max() < 1e-12

    def test_mirror_gives_reflection(self, rng):
        pts = rng.normal(size=(20, 3))
        mirrored = pts * np.array([-1.0, 1.0, 1.0])
        R, t = fit_rigid(pts, mirrored)
        assert np.linalg.det(R) == pytest.approx(-1.0, abs=1e-10)
        assert np.abs(pts @ R.T + t - mirrored).max() < 1e-10

    def test_recovers_known_pose(self, rng):
        pts = rng.normal(size=(50, 3))
        R0, t0 = random_rigid(rng)
        noisy = pts @ R0.T + t0 + 1e-6 * rng.normal(size=pts.shape)
        R, t = fit_rigid(pts, noisy)
        assert np.abs(R - R0).max() < 1e-5
        assert np.abs(t - t0).max() < 1e-5

    def test_degenerate_rejected(self):
        line = np.outer(np.arange(5.0), [1.0, 0.0, 0.0])
        with pytest.raises(RigidFitError, match="rank-deficient"):
            fit_rigid(line, line)


class TestEulerDerivatives:
    def test_matches_fd(self, rng):
        ang = rng.normal(size=3) * 0.5
        R, dR = euler_rotation_derivatives(ang)
        assert np.abs(R - euler_rotation(ang)).max() < 1e-14
        eps = 1e-7
        for a in range(3):
            e = np.zeros(3)
            e[a] = eps
            fd = (euler_rotation(ang + e) - euler_rotation(ang - e)) / (2 * eps)
            assert np.abs(dR[a] - fd).max() < 1e-7


def small_sphere_set(rng, n_shapes=3, subdiv=1, h_fraction=0.06):
    """Tiny on-surface ensemble over slightly perturbed unit spheres."""
    urshape = make_icosphere(subdiv)
    grids = []
    positions = []
    for i in range(n_shapes):
        g = np.random.default_rng(10 + i)
        d = g.normal(size=(2500, 3))
        d /= np.linalg.norm(d, axis=1)[:, None]
        cloud = OrientedPointCloud(d, d)
        grid = fit_sdf(cloud, bbox=(np.full(3, -1.0), np.full(3, 1.0)),
                       h_fraction=h_fraction)
        grids.append(grid)
        drift = 0.05 * g.normal(size=urshape.vertices.shape)
        positions.append(grid.project_to_surface(urshape.vertices + drift))
    cset = CorrespondenceSet(urshape, np.stack(positions), grids).fit_poses()
    return cset


class TestEnsembleEnergy:
    def test_gradient_matches_fd(self, rng):
        cset = small_sphere_set(rng, n_shapes=2, subdiv=0)
        config = OptimizerConfig(delta=0.05)
        model = EnsembleEnergy(cset, config)
        pos = cset.positions.copy()
        ang = 0.01 * rng.normal(size=(cset.n_shapes, 3))
        off = 0.02 * rng.normal(size=(cset.n_shapes, 3))
        e0, g_pos, g_ang, g_off, _ = model.evaluate(pos, ang, off)
        step = 1e-6
        # position block (ambient gradient, no projection involved)
        fd = np.zeros_like(g_pos)
        for i in range(pos.shape[0]):
            for j in range(pos.shape[1]):
                for k in range(3):
                    p = pos.copy()
                    p[i, j, k] += step
                    ep = model.evaluate(p, ang, off)[0]
                    p[i, j, k] -= 2 * step
                    em = model.evaluate(p, ang, off)[0]
                    fd[i, j, k] = (ep - em) / (2 * step)
        scale = max(np.abs(fd).max(), 1e-12)
        assert np.abs(g_pos - fd).max() / scale < 1e-4
        # angle and offset blocks
        fd_ang = np.zeros_like(g_ang)
        fd_off = np.zeros_like(g_off)
        for i in range(ang.shape[0]):
            for a in range(3):
                q = ang.copy()
                q[i, a] += step
                ep = model.evaluate(pos, q, off)[0]
                q[i, a] -= 2 * step
                em = model.evaluate(pos, q, off)[0]
                fd_ang[i, a] = (ep - em) / (2 * step)
                o = off.copy()
                o[i, a] += step
                ep = model.evaluate(pos, ang, o)[0]
                o[i, a] -= 2 * step
                em = model.evaluate(pos, ang, o)[0]
                fd_off[i, a] = (ep - em) / (2 * step)
        scale = max(np.abs(fd_ang).max(), 1e-12)
        assert np.abs(g_ang - fd_ang).max() / scale < 1e-4
        scale = max(np.abs(fd_off).max(), 1e-12)
        assert np.abs(g_off - fd_off).max() / scale < 1e-4


class TestOptimizeEnsemble:
    def test_identical_shapes_fixed_point(self):
        rng = np.random.default_rng(3)
        urshape = make_icosphere(0)
        d = rng.normal(size=(2500, 3))
        d /= np.linalg.norm(d, axis=1)[:, None]
        grid = fit_sdf(OrientedPointCloud(d, d),
                       bbox=(np.full(3, -1.0), np.full(3, 1.0)), h_fraction=0.06)
        base = grid.project_to_surface(urshape.vertices)
        positions = np.stack([base] * 3)
        cset = CorrespondenceSet(urshape, positions, [grid] * 3)
        # with identical shapes the compactness gradient is exactly zero;
        # disable the (always-active) meshing force to expose the fixed point
        config = OptimizerConfig(max_iterations=20, delta=1e-3, mu_l_relative=1e-30)
        result = optimize_ensemble(cset, config)
        drift = np.linalg.norm(result.correspondences.positions - positions, axis=2)
        assert drift.max() < 1e-9
        assert result.energy <= result.initial_energy + 1e-12
        assert result.converged

    def test_identical_shapes_stay_identical_with_regularizer(self):
        rng = np.random.default_rng(4)
        urshape = make_icosphere(0)
        d = rng.normal(size=(2500, 3))
        d /= np.linalg.norm(d, axis=1)[:, None]
        grid = fit_sdf(OrientedPointCloud(d, d),
                       bbox=(np.full(3, -1.0), np.full(3, 1.0)), h_fraction=0.06)
        base = grid.project_to_surface(urshape.vertices)
        cset = CorrespondenceSet(urshape, np.stack([base] * 3), [grid] * 3)
        result = optimize_ensemble(cset, OptimizerConfig(max_iterations=10, delta=1e-3))
        pos = result.correspondences.positions
        # meshing may slide points, but identically on every shape
        assert np.abs(pos - pos[0]).max() < 1e-6
        assert result.energy <= result.initial_energy + 1e-12

    def test_energy_monotone_and_on_surface(self, rng):
        cset = small_sphere_set(rng)
        config = OptimizerConfig(max_iterations=15)
        result = optimize_ensemble(cset, config, verify_on_surface=True)
        energies = [r.energy for r in result.trace]
        assert all(b <= a + 1e-10 for a, b in zip(energies, energies[1:]))
        result.correspondences.assert_on_surface()

    def test_compaction_small(self):
        # 4-shape, coarse version of the ellipsoid drift experiment
        cset, gt = ellipsoid_family(n_shapes=4, subdivisions=2,
                                    drift_fraction=0.08, h_fraction=0.06)
        before = gram_matrix(cset.model_frame())
        frac_before = before.eigenvalues[0] / before.eigenvalues.sum()
        config = OptimizerConfig(max_iterations=400, mu_l_relative=1e-2,
                                 delta_scale=1e-3)
        result = optimize_ensemble(cset, config)
        after = gram_matrix(result.correspondences.model_frame())
        frac_after = after.eigenvalues[0] / after.eigenvalues.sum()
        assert result.energy < result.initial_energy
        assert frac_after > frac_before
        err_before = np.linalg.norm(cset.positions - gt, axis=2).mean()
        err_after = np.linalg.norm(result.correspondences.positions - gt, axis=2).mean()
        assert err_after < err_before


class TestBoundaryEnergy:
    def test_on_curve_zero(self):
        poly = Polyline(np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], float))
        positions = np.array([[[0.5, 0.0, 0.0], [1.0, 0.5, 0.0]]])
        e, g = boundary_energy(positions, [0, 1], [poly])
        assert e == pytest.approx(0.0, abs=1e-20)
        assert np.abs(g).max() < 1e-12

    def test_offset_squared(self):
        poly = Polyline(np.array([[0, 0, 0], [1, 0, 0]], float), closed=False)
        eps = 1e-3
        positions = np.array([[[0.5, eps, 0.0]]])
        e, _ = boundary_energy(positions, [0], [poly])
        assert e == pytest.approx(eps**2, rel=1e-12)

    def test_gradient_matches_fd(self, rng):
        poly = Polyline(rng.normal(size=(6, 3)))
        positions = rng.normal(size=(2, 4, 3))
        e0, g = boundary_energy(positions, [1, 3], [poly, poly])
        step = 1e-7
        for i in range(2):
            for j in (1, 3):
                for k in range(3):
                    p = positions.copy()
                    p[i, j, k] += step
                    ep = boundary_energy(p, [1, 3], [poly, poly])[0]
                    p[i, j, k] -= 2 * step
                    em = boundary_energy(p, [1, 3], [poly, poly])[0]
                    fd = (ep - em) / (2 * step)
                    assert abs(g[i, j, k] - fd) < 1e-5 * max(abs(fd), 1.0)

    def test_empty_curve_rejected(self):
        with pytest.raises(ValueError):
            Polyline(np.zeros((1, 3)))

    def test_arc_parameter_roundtrip(self, rng):
        poly = Polyline(rng.normal(size=(8, 3)))
        s = rng.random(20)
        pts = poly.point_at(s)
        _, q, s2 = poly.closest(pts)
        assert np.abs(q - pts).max() < 1e-9
        wrap = np.minimum(np.abs(s - s2), 1.0 - np.abs(s - s2))
        assert wrap.max() < 1e-9
