import numpy as np
import pytest

from partspace.mesh import TriMesh, sample_surface

from conftest import make_icosphere, make_square


def test_unit_square_count_and_normals():
    m = make_square(2)
    cloud = sample_surface(m, spacing=0.1, seed=0)
    assert 80 <= len(cloud) <= 120
    assert np.allclose(np.abs(cloud.normals[:, 2]), 1.0)
    assert np.allclose(cloud.normals[:, :2], 0.0)


def test_single_triangle_gets_centroid():
    m = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    cloud = sample_surface(m, spacing=10.0, seed=0)
    assert len(cloud) == 1
    assert np.allclose(cloud.points[0], [1 / 3, 1 / 3, 0.0])


def test_sphere_normals_radial():
    m = make_icosphere(3)
    cloud = sample_surface(m, spacing=0.15, seed=0)
    radial = cloud.points / np.linalg.norm(cloud.points, axis=1)[:, None]
    cos = np.einsum("ij,ij->i", radial, cloud.normals)
    assert np.degrees(np.arccos(np.clip(cos, -1, 1))).max() < 5.0


def test_spacing_respected():
    m = make_square(2)
    cloud = sample_surface(m, spacing=0.2, seed=1)
    from scipy.spatial.distance import pdist

    dmin = pdist(cloud.points).min()
    assert dmin >= 0.75 * 0.2 - 1e-12


def test_bad_spacing():
    with pytest.raises(ValueError):
        sample_surface(make_square(2), 0.0)
