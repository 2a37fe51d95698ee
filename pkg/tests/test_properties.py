"""Randomized properties over generated clouds and rotations."""

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from oracles import brute_fps, brute_knn

from rotinv.config import RunConfig
from rotinv.errors import DegenerateCloud
from rotinv.geometry import (
    PointCloud,
    apply_rotation,
    center_and_normalize,
    estimate_normals,
    farthest_point_sample,
    is_rotation,
    knn_all,
    quaternion_to_matrix,
)
from rotinv.local import local_representation, pair_feature
from rotinv.network import cross_entropy_loss

coords = st.floats(-10, 10, allow_nan=False, width=64)
# half-integer grid values produce many exact distance ties
grid = st.integers(-6, 6).map(lambda v: v / 2)


def clouds(min_n=4, max_n=60, elements=coords):
    return st.integers(min_n, max_n).flatmap(lambda n: arrays(np.float64, (n, 3), elements=elements))


quaternions = arrays(np.float64, 4, elements=st.floats(-1, 1, width=64)).filter(
    lambda q: np.linalg.norm(q) > 0.1)

SETTINGS = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@SETTINGS
@given(clouds(elements=st.one_of(coords, grid)), st.data())
def test_knn_matches_brute_force(pts, data):
    n = len(pts)
    k = data.draw(st.integers(1, n - 1))
    table = knn_all(pts, k)
    for q in range(n):
        assert table[q].tolist() == brute_knn(pts, q, k)


@SETTINGS
@given(clouds(elements=st.one_of(coords, grid)), st.data())
def test_fps_matches_brute_force(pts, data):
    m = data.draw(st.integers(1, len(pts)))
    assert farthest_point_sample(pts, m).tolist() == brute_fps(pts, m)


@SETTINGS
@given(clouds(min_n=2))
def test_center_and_normalize(pts):
    try:
        out = center_and_normalize(PointCloud(pts))
    except DegenerateCloud:
        assert np.ptp(pts, axis=0).max() < 1e-9
        return
    assert np.linalg.norm(out.points.mean(axis=0)) < 1e-12
    assert abs(np.linalg.norm(out.points, axis=1).max() - 1.0) < 1e-12


@SETTINGS
@given(quaternions)
def test_quaternions_give_rotations(q):
    assert is_rotation(quaternion_to_matrix(q))


@SETTINGS
@given(arrays(np.float64, (4, 3), elements=st.floats(-1, 1, width=64)), quaternions)
def test_pair_feature_invariant(vecs, q):
    pq, pk, nq, nk = vecs
    if min(np.linalg.norm(nq), np.linalg.norm(nk)) < 1e-3 or np.linalg.norm(pk - pq) < 1e-3:
        return
    nq, nk = nq / np.linalg.norm(nq), nk / np.linalg.norm(nk)
    R = quaternion_to_matrix(q)
    a = pair_feature(pq, nq, pk, nk)
    b = pair_feature(pq @ R, nq @ R, pk @ R, nk @ R)
    assert np.abs(a - b).max() < 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), quaternions)
def test_local_representation_invariant(seed, q):
    rng = np.random.default_rng(seed)
    cloud = estimate_normals(PointCloud(rng.normal(size=(48, 3)) * [1, 0.6, 0.3]), 8)
    R = quaternion_to_matrix(q)
    base = local_representation(cloud, 8)
    assert np.abs(local_representation(apply_rotation(cloud, R), 8) - base).max() < 1e-9


@SETTINGS
@given(arrays(np.float64, st.integers(2, 8), elements=st.floats(-50, 50, width=64)), st.data())
def test_cross_entropy_non_negative(logits, data):
    label = data.draw(st.integers(0, len(logits) - 1))
    assert cross_entropy_loss(logits, label) >= 0


@SETTINGS
@given(st.integers(1, 64), st.integers(1, 64), st.sampled_from(["attention", "avg", "cat"]),
       st.booleans(), st.floats(1e-4, 1.0))
def test_config_round_trip(k, m, fusion, bn, lr):
    cfg = RunConfig(k=k, m=m, fusion=fusion, bn=bn, lr=lr)
    assert RunConfig.from_dict(cfg.to_dict()) == cfg
