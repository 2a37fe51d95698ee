import numpy as np
import pytest

from rotinv.canonical import (
    canonical_frame,
    disambiguate_signs,
    edge_features,
    min_separation,
    project,
    spectrum_warning,
)
from rotinv.errors import AmbiguousAnchor, BadK
from rotinv.geometry import PointCloud, apply_rotation, random_rotation
from rotinv.shapes import KINDS, ShapeSpec, make_shape

SIX = PointCloud([(2, 0.3, 0.2), (-2, -0.3, -0.2), (0, 1, 0), (0, -1, 0), (0, 0, 0.5), (0, 0, -0.5)])

# eigenvectors of P^T P (independent of the SVD path), signs flipped toward point 0 by hand
SIX_FRAME = np.array([
    [0.975757461602, 0.191014421106, 0.106821660058],
    [0.192666148252, -0.981250237312, -0.005265652256],
    [0.103812963764, 0.025718917272, -0.994264253531],
])
SIX_SINGULAR = [2.884797607072, 1.394007733132, 0.70333861418]


class TestDisambiguate:
    def test_all_positive(self):
        np.testing.assert_array_equal(disambiguate_signs(np.eye(3), (1, 1, 1)), np.eye(3))

    def test_single_flip(self):
        out = disambiguate_signs(np.eye(3), (-1, 1, 1))
        np.testing.assert_array_equal(out, np.diag([-1.0, 1, 1]))

    def test_orthogonal_anchor(self):
        with pytest.raises(AmbiguousAnchor):
            disambiguate_signs(np.eye(3), (1, 0, 1))


class TestCanonicalFrame:
    def test_six_point_reference(self):
        f = canonical_frame(SIX, 6)
        np.testing.assert_allclose(f.V, SIX_FRAME, atol=1e-11)
        np.testing.assert_allclose(f.singular_values, SIX_SINGULAR, atol=1e-11)
        assert f.anchor == 0
        assert np.all(SIX.points[0] @ f.V > 0)
        assert f.warning is None

    def test_canonical_pose_projects_to_itself(self):
        s = make_shape(ShapeSpec("ellipsoid", 256, 0.0, seed=3))
        out = project(s, canonical_frame(s, 32)).points
        np.testing.assert_allclose(np.abs(out), np.abs(s.points), atol=0.1)
        assert np.allclose(np.abs(canonical_frame(s, 32).V), np.eye(3), atol=0.1)

    def test_full_sample_is_full_svd(self, rng):
        pts = rng.normal(size=(40, 3)) * [3, 2, 1]
        pts -= pts.mean(axis=0)
        f = canonical_frame(PointCloud(pts), 40)
        np.testing.assert_allclose(f.singular_values, np.linalg.svd(pts, compute_uv=False))

    def test_anchor_fallback(self):
        # axis points are each orthogonal to two frame axes, so all six are ambiguous
        # anchors; the first cube corner (index 6) is the first that resolves every sign
        axis_pts = [(3, 0, 0), (-3, 0, 0), (0, 2, 0), (0, -2, 0), (0, 0, 1), (0, 0, -1)]
        corners = [(0.5, -0.5, 0.5)] + [(x, y, z) for x in (-0.5, 0.5) for y in (-0.5, 0.5)
                                        for z in (-0.5, 0.5) if (x, y, z) != (0.5, -0.5, 0.5)]
        f = canonical_frame(PointCloud(axis_pts + corners), 14)
        assert f.anchor == 6
        np.testing.assert_allclose(f.V, np.diag([1.0, -1.0, 1.0]), atol=1e-12)

    def test_rank_deficient_warning(self):
        flat = PointCloud([(1, 0, 0), (-1, 0, 0), (0, 0.5, 0), (0, -0.5, 0), (0.3, 0.2, 0)])
        f = canonical_frame(flat, 5)
        assert f.rank_deficient
        # the normal axis of the plane cannot be signed by any point; largest component wins
        np.testing.assert_allclose(f.V[:, 2], [0, 0, 1], atol=1e-12)
        centered = flat.points - flat.points.mean(axis=0)
        assert np.all(centered[f.anchor] @ f.V[:, :2] > 0)
        assert spectrum_warning(np.array([1.0, 0.5, 0.5])) is not None

    def test_projection_preserves_norms(self, rng):
        c = PointCloud(rng.normal(size=(50, 3)) * [2, 1, 0.5])
        out = project(c, canonical_frame(c, 16))
        np.testing.assert_allclose(np.linalg.norm(out.points, axis=1),
                                   np.linalg.norm(c.points, axis=1), atol=1e-12)

    def test_identity_frame(self, rng):
        c = PointCloud(rng.normal(size=(10, 3)))
        f = canonical_frame(c, 5)
        f = type(f)(np.eye(3), f.anchor, f.singular_values, f.sample)
        np.testing.assert_array_equal(project(c, f).points, c.points)

    @pytest.mark.parametrize("kind", KINDS)
    def test_pipeline_invariance(self, kind, rng):
        s = make_shape(ShapeSpec(kind, 256, 0.01, seed=11))
        base = project(s, canonical_frame(s, 32)).points
        for _ in range(20):
            moved = apply_rotation(s, random_rotation(rng))
            out = project(moved, canonical_frame(moved, 32)).points
            assert np.abs(out - base).max() < 1e-6

    def test_random_sampler_is_seeded(self, rng):
        c = PointCloud(rng.normal(size=(60, 3)) * [2, 1, 0.5])
        a = canonical_frame(c, 16, "random", seed=5)
        b = canonical_frame(c, 16, "random", seed=5)
        np.testing.assert_array_equal(a.sample, b.sample)
        assert not np.array_equal(a.sample, canonical_frame(c, 16, "random", seed=6).sample)

    def test_separation(self):
        assert min_separation(np.array([3.0, 2.0, 1.5])) == pytest.approx(0.5 / 3)


class TestEdgeFeatures:
    def test_two_points(self):
        out = edge_features(np.array([[0, 0, 0], [1, 0, 0.0]]), 1)
        np.testing.assert_array_equal(out[0, 0], [0, 0, 0, 1, 0, 0])
        np.testing.assert_array_equal(out[1, 0], [1, 0, 0, -1, 0, 0])

    def test_shape(self, rng):
        assert edge_features(rng.normal(size=(30, 3)), 7).shape == (30, 7, 6)

    def test_bad_k(self, rng):
        with pytest.raises(BadK):
            edge_features(rng.normal(size=(5, 3)), 5)

    def test_pipeline_invariance(self, rng):
        s = make_shape(ShapeSpec("cone", 256, 0.01, seed=2))
        base = edge_features(project(s, canonical_frame(s, 32)), 16)
        for _ in range(20):
            moved = apply_rotation(s, random_rotation(rng))
            out = edge_features(project(moved, canonical_frame(moved, 32)), 16)
            assert np.abs(out - base).max() < 1e-6
