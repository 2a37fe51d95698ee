import numpy as np
import pytest
from conftest import random_cloud
from oracles import reference_pair_feature

from rotinv.errors import BadK, MissingNormals, ZeroVector
from rotinv.geometry import PointCloud, apply_rotation, knn_all, random_rotation
from rotinv.local import local_frame, local_representation, pair_feature

EZ = (0.0, 0.0, 1.0)


class TestLocalFrame:
    def test_generic(self):
        f = local_frame((1, 0, 0), EZ)
        np.testing.assert_allclose(f.u, [0, -1, 0], atol=1e-15)
        np.testing.assert_allclose(f.v, [-1, 0, 0], atol=1e-15)

    def test_parallel_fallback(self):
        f = local_frame((0, 0, 2), EZ)
        np.testing.assert_allclose(f.u, [0, -1, 0], atol=1e-15)

    def test_zero_displacement(self):
        with pytest.raises(ZeroVector):
            local_frame((0, 0, 1e-13), EZ)

    def test_orthonormal(self, rng):
        for _ in range(200):
            n = rng.normal(size=3)
            n /= np.linalg.norm(n)
            f = local_frame(rng.normal(size=3), n)
            for a, b in ((f.u, f.n), (f.v, f.n), (f.u, f.v)):
                assert abs(a @ b) < 1e-9
            assert np.linalg.norm(f.u) == pytest.approx(1.0)
            assert np.linalg.norm(f.v) == pytest.approx(1.0)


class TestPairFeature:
    def test_along_x(self):
        np.testing.assert_allclose(pair_feature((0, 0, 0), EZ, (1, 0, 0), EZ),
                                   [1, 0, 0, 1, 1, 1, 0, 0], atol=1e-15)

    def test_along_y(self):
        f = pair_feature((0, 0, 0), EZ, (0, 2, 0), EZ)
        np.testing.assert_allclose(f, [2, 0, 0, 1, 1, 1, 0, 0], atol=1e-15)

    def test_coincident(self):
        with pytest.raises(ZeroVector):
            pair_feature((1, 2, 3), EZ, (1, 2, 3), EZ)

    def test_matches_reference(self, rng):
        for _ in range(100):
            nq, nk = rng.normal(size=(2, 3))
            nq, nk = nq / np.linalg.norm(nq), nk / np.linalg.norm(nk)
            pq, pk = rng.normal(size=(2, 3))
            np.testing.assert_allclose(pair_feature(pq, nq, pk, nk),
                                       reference_pair_feature(pq, nq, pk, nk), atol=1e-12)

    def test_parallel_case_matches_reference(self):
        n = np.array([0.0, 0.6, 0.8])
        args = ((0, 0, 0), n, 2 * n, n)
        np.testing.assert_allclose(pair_feature(*args), reference_pair_feature(*args), atol=1e-12)

    def test_rotation_invariant(self, rng):
        nq, nk = np.array(EZ), np.array([0.0, 0.6, 0.8])
        pq, pk = np.zeros(3), np.array([0.3, -0.2, 0.5])
        base = pair_feature(pq, nq, pk, nk)
        for _ in range(20):
            R = random_rotation(rng)
            np.testing.assert_allclose(pair_feature(pq @ R, nq @ R, pk @ R, nk @ R), base, atol=1e-9)


class TestLocalRepresentation:
    def test_shape(self, rng):
        out = local_representation(random_cloud(rng, n=64), 32)
        assert out.shape == (64, 32, 8)

    def test_rows_follow_knn_order(self, rng):
        c = random_cloud(rng, n=40)
        out = local_representation(c, 5)
        nbrs = knn_all(c.points, 5)
        for q in (0, 17, 39):
            for j, k in enumerate(nbrs[q]):
                np.testing.assert_allclose(out[q, j], pair_feature(c.points[q], c.normals[q],
                                                                   c.points[k], c.normals[k]))

    def test_missing_normals(self):
        with pytest.raises(MissingNormals):
            local_representation(PointCloud(np.eye(3)), 1)

    def test_bad_k(self, rng):
        with pytest.raises(BadK):
            local_representation(random_cloud(rng, n=10), 10)

    def test_duplicate_point_gives_zero_row(self, rng):
        c = random_cloud(rng, n=20)
        pts = np.vstack([c.points, c.points[3]])
        nrm = np.vstack([c.normals, c.normals[3]])
        out = local_representation(PointCloud(pts, nrm), 4)
        np.testing.assert_array_equal(out[3, 0], np.zeros(8))
        np.testing.assert_array_equal(out[20, 0], np.zeros(8))
        assert np.all(np.isfinite(out))

    def test_rotation_invariant(self, rng):
        c = random_cloud(rng, n=128, normals_k=10)
        base = local_representation(c, 16)
        for _ in range(20):
            moved = local_representation(apply_rotation(c, random_rotation(rng)), 16)
            assert np.abs(moved - base).max() < 1e-9

    def test_translation_invariant(self, rng):
        c = random_cloud(rng, n=64)
        shifted = PointCloud(c.points + [0.25, -0.5, 0.125], c.normals)
        assert np.abs(local_representation(shifted, 8) - local_representation(c, 8)).max() < 1e-12
