"""Local rotation-invariant descriptors from point pairs and their normals.

For a query point q with neighbor k, d = p_k - p_q and each endpoint gets a
frame (n, u, v) with u = d x n, v = u x n.  A neighbor is described by the row

    [|d|, cos(d,n_q), cos(d,n_k), cos(n_q,n_k), cos(u_q,u_k),
     cos(v_q,v_k), cos(u_q,v_k), cos(v_q,u_k)]

so a point with k neighbors carries a k x 8 block.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import MissingNormals, ZeroVector
from .geometry import PointCloud, knn_all

FEATURE_WIDTH = 8
FEATURE_NAMES = ("dist", "cos_d_nq", "cos_d_nk", "cos_nq_nk", "cos_uq_uk",
                 "cos_vq_vk", "cos_uq_vk", "cos_vq_uk")

ZERO_TOL = 1e-12
PARALLEL_TOL = 1e-9


class LocalFrame(NamedTuple):
    n: np.ndarray
    u: np.ndarray
    v: np.ndarray


def _fallback_axis(n: np.ndarray) -> np.ndarray:
    # Basis vector with the smallest |component| of n; argmin picks the lowest axis on ties.
    axis = np.zeros(n.shape, dtype=np.float64)
    idx = np.argmin(np.abs(n), axis=-1)
    np.put_along_axis(axis, idx[..., None], 1.0, axis=-1)
    return axis


def _frames(d: np.ndarray, n: np.ndarray):
    """Vectorized u, v axes for (..., 3) displacement/normal arrays."""
    u = np.cross(d, n)
    u_len = np.linalg.norm(u, axis=-1, keepdims=True)
    parallel = u_len[..., 0] < PARALLEL_TOL
    if np.any(parallel):
        u[parallel] = np.cross(_fallback_axis(n[parallel]), n[parallel])
        u_len[parallel] = np.linalg.norm(u[parallel], axis=-1, keepdims=True)
    u = u / u_len
    v = np.cross(u, n)
    v = v / np.linalg.norm(v, axis=-1, keepdims=True)
    return u, v


def local_frame(d, n) -> LocalFrame:
    d = np.asarray(d, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    if np.linalg.norm(d) <= ZERO_TOL:
        raise ZeroVector("displacement has zero length")
    if abs(np.linalg.norm(n) - 1.0) > 1e-9:
        raise ValueError("normal must have unit length")
    u, v = _frames(d[None], n[None])
    return LocalFrame(n, u[0], v[0])


def _rows(d: np.ndarray, nq: np.ndarray, nk: np.ndarray) -> np.ndarray:
    dist = np.linalg.norm(d, axis=-1)
    dhat = d / dist[..., None]
    uq, vq = _frames(d, nq)
    uk, vk = _frames(d, nk)

    def dot(a, b):
        return np.einsum("...i,...i->...", a, b)

    out = np.stack(
        [dist, dot(dhat, nq), dot(dhat, nk), dot(nq, nk), dot(uq, uk),
         dot(vq, vk), dot(uq, vk), dot(vq, uk)],
        axis=-1,
    )
    np.clip(out[..., 1:], -1.0, 1.0, out=out[..., 1:])
    return out


def pair_feature(p_q, n_q, p_k, n_k) -> np.ndarray:
    """The 8-vector describing neighbor k as seen from query q."""
    d = np.asarray(p_k, dtype=np.float64) - np.asarray(p_q, dtype=np.float64)
    if np.linalg.norm(d) <= ZERO_TOL:
        raise ZeroVector("query and neighbor coincide")
    nq = np.asarray(n_q, dtype=np.float64)
    nk = np.asarray(n_k, dtype=np.float64)
    return _rows(d[None], nq[None], nk[None])[0]


def local_representation(cloud: PointCloud, k: int, neighbors: np.ndarray | None = None) -> np.ndarray:
    """(N, k, 8) local features over each point's k nearest neighbors.

    Rows for neighbors that coincide with the query are all zeros.
    """
    if cloud.normals is None:
        raise MissingNormals("local features need per-point normals")
    if neighbors is None:
        neighbors = knn_all(cloud.points, k)
    pts, nrm = cloud.points, cloud.normals
    d = pts[neighbors] - pts[:, None, :]
    nq = np.broadcast_to(nrm[:, None, :], d.shape)
    nk = nrm[neighbors]

    degenerate = np.linalg.norm(d, axis=-1) <= ZERO_TOL
    out = np.zeros(d.shape[:2] + (FEATURE_WIDTH,))
    ok = ~degenerate
    if np.all(ok):
        out[:] = _rows(d, nq, nk)
    else:
        out[ok] = _rows(d[ok], nq[ok], nk[ok])
    return out
