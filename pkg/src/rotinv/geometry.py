"""Point-cloud container and the neighborhood / sampling / rotation primitives.

Everything here works in float64 and is a pure function of its inputs.
Distance ties are always broken toward the lower point index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadCount, BadK, DegenerateCloud

NORMAL_TOL = 1e-9
ROTATION_TOL = 1e-12

# Row block size for the brute-force distance matrix; keeps N=4096 under ~100 MB.
_KNN_BLOCK = 512


@dataclass(frozen=True, eq=False)
class PointCloud:
    """N x 3 positions with optional N x 3 unit normals."""

    points: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise ValueError(f"points must be an (N, 3) array with N >= 1, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain non-finite coordinates")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = np.array(self.normals, dtype=np.float64)
            if nrm.shape != pts.shape:
                raise ValueError(f"normals shape {nrm.shape} does not match points {pts.shape}")
            lengths = np.linalg.norm(nrm, axis=1)
            if not np.all(np.abs(lengths - 1.0) <= NORMAL_TOL):
                raise ValueError("normals must have unit length")
            nrm.flags.writeable = False
            object.__setattr__(self, "normals", nrm)

    def __len__(self):
        return self.points.shape[0]

    @property
    def has_normals(self) -> bool:
        return self.normals is not None

    def with_normals(self, normals) -> PointCloud:
        return PointCloud(self.points, normals)

    def take(self, indices) -> PointCloud:
        idx = np.asarray(indices, dtype=np.intp)
        return PointCloud(self.points[idx], None if self.normals is None else self.normals[idx])


def unit_rows(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def is_rotation(R, tol: float = ROTATION_TOL) -> bool:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return bool(np.all(np.abs(R.T @ R - np.eye(3)) <= tol) and abs(np.linalg.det(R) - 1.0) <= tol)


def check_indices(indices, n: int) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1 or np.any(idx < 0) or np.any(idx >= n) or len(np.unique(idx)) != len(idx):
        raise ValueError("index list must hold distinct indices in [0, N)")
    return idx


def center_and_normalize(cloud: PointCloud) -> PointCloud:
    """Translate the centroid to the origin and scale into the unit ball."""
    pts = cloud.points - cloud.points.mean(axis=0)
    radius = np.linalg.norm(pts, axis=1).max()
    scale = max(1.0, np.abs(cloud.points).max())
    if radius <= 1e-12 * scale:
        raise DegenerateCloud("all points coincide; cannot normalize a zero-radius cloud")
    pts = pts / radius
    # Re-center after scaling: the division can reintroduce a ~1e-17 centroid drift.
    pts -= pts.mean(axis=0)
    return PointCloud(pts, cloud.normals)


def _check_k(k: int, n: int):
    if k < 1 or k > n - 1:
        raise BadK(f"k must satisfy 1 <= k <= N-1 (N={n}), got {k}")


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Explicit differences rather than |a|^2 - 2ab + |b|^2: exact zero for coincident
    # points and no cancellation, which keeps neighbor order stable under rotation.
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _k_smallest(d2: np.ndarray, k: int) -> np.ndarray:
    """Row-wise indices of the k smallest entries, ordered by (value, index)."""
    n = d2.shape[1]
    if k >= n - 1 or n <= 64:
        return np.argsort(d2, axis=1, kind="stable")[:, :k]
    part = np.argpartition(d2, k - 1, axis=1)[:, :k]
    vals = np.take_along_axis(d2, part, axis=1)
    kth = vals.max(axis=1)
    # argpartition picks arbitrarily among values tied with the k-th; redo those rows exactly
    ambiguous = np.count_nonzero(d2 <= kth[:, None], axis=1) > k
    order = np.lexsort((part, vals), axis=1)
    out = np.take_along_axis(part, order, axis=1)
    if np.any(ambiguous):
        out[ambiguous] = np.argsort(d2[ambiguous], axis=1, kind="stable")[:, :k]
    return out


def knn_all(points: np.ndarray, k: int) -> np.ndarray:
    """(N, k) neighbor indices for every point; the query itself is excluded."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    _check_k(k, n)
    out = np.empty((n, k), dtype=np.intp)
    for start in range(0, n, _KNN_BLOCK):
        stop = min(start + _KNN_BLOCK, n)
        d2 = _sq_dists(points[start:stop], points)
        rows = np.arange(stop - start)
        d2[rows, rows + start] = np.inf
        out[start:stop] = _k_smallest(d2, k)
    return out


def knn(cloud: PointCloud, query: int, k: int) -> np.ndarray:
    """The k nearest other points of `query`, nearest first."""
    n = len(cloud)
    _check_k(k, n)
    if not 0 <= query < n:
        raise IndexError(f"query index {query} out of range for N={n}")
    d2 = _sq_dists(cloud.points[query : query + 1], cloud.points)[0]
    d2[query] = np.inf
    return np.argsort(d2, kind="stable")[:k]


def farthest_point_sample(cloud: PointCloud | np.ndarray, m: int) -> np.ndarray:
    """Greedy farthest point sampling seeded at the point farthest from the centroid."""
    points = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    n = points.shape[0]
    if m < 1 or m > n:
        raise BadCount(f"sample size must satisfy 1 <= m <= N (N={n}), got {m}")
    centered = points - points.mean(axis=0)
    first = int(np.argmax(np.einsum("ij,ij->i", centered, centered)))
    selected = np.empty(m, dtype=np.intp)
    selected[0] = first
    diff = points - points[first]
    min_d2 = np.einsum("ij,ij->i", diff, diff)
    for i in range(1, m):
        nxt = int(np.argmax(min_d2))  # argmax returns the first maximum
        selected[i] = nxt
        diff = points - points[nxt]
        np.minimum(min_d2, np.einsum("ij,ij->i", diff, diff), out=min_d2)
    return selected


def random_sample(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random subset of m indices (order as drawn)."""
    if m < 1 or m > n:
        raise BadCount(f"sample size must satisfy 1 <= m <= N (N={n}), got {m}")
    return rng.choice(n, size=m, replace=False)


def _orient_normal(normal: np.ndarray, outward: np.ndarray) -> np.ndarray:
    dot = float(normal @ outward)
    if abs(dot) <= 1e-9:
        if normal[int(np.argmax(np.abs(normal)))] < 0:
            return -normal
        return normal
    return -normal if dot < 0 else normal


def estimate_normals(cloud: PointCloud, k: int = 16) -> PointCloud:
    """Plane-fit normals from each point plus its k nearest neighbors.

    The normal is the least-significant right singular vector of the centered
    neighborhood, oriented away from the cloud centroid.
    """
    n = len(cloud)
    if k < 3:
        raise BadK(f"normal estimation needs k >= 3 neighbors, got {k}")
    _check_k(k, n)
    nbrs = knn_all(cloud.points, k)
    centroid = cloud.points.mean(axis=0)
    hoods = np.concatenate([cloud.points[:, None, :], cloud.points[nbrs]], axis=1)
    hoods = hoods - hoods.mean(axis=1, keepdims=True)
    _, _, vt = np.linalg.svd(hoods, full_matrices=False)
    raw = unit_rows(vt[:, -1, :])
    outward = cloud.points - centroid
    normals = np.array([_orient_normal(raw[i], outward[i]) for i in range(n)])
    return PointCloud(cloud.points, normals)


def quaternion_to_matrix(q) -> np.ndarray:
    """Rotation matrix of unit quaternion (w, x, y, z), column-vector convention."""
    w, x, y, z = np.asarray(q, dtype=np.float64) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def z_rotation(angle: float) -> np.ndarray:
    """Right-multiplying matrix that turns row vectors counter-clockwise about +z."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def random_rotation(rng: np.random.Generator, mode: str = "so3") -> np.ndarray:
    """Draw a rotation: uniform about the z axis (`z`) or uniform over SO(3) (`so3`)."""
    if mode == "z":
        return z_rotation(rng.uniform(0.0, 2.0 * np.pi))
    if mode == "so3":
        # Shoemake's subgroup algorithm: uniform unit quaternion from three uniforms.
        u1, u2, u3 = rng.random(3)
        a, b = np.sqrt(1.0 - u1), np.sqrt(u1)
        q = (b * np.cos(2 * np.pi * u3), a * np.sin(2 * np.pi * u2),
             a * np.cos(2 * np.pi * u2), b * np.sin(2 * np.pi * u3))
        return quaternion_to_matrix(q)
    raise ValueError(f"unknown rotation mode {mode!r}; expected 'z' or 'so3'")


def apply_rotation(cloud: PointCloud, R) -> PointCloud:
    """Rotate row-vector points as P @ R; normals follow (re-normalized if R is inexact)."""
    R = np.asarray(R, dtype=np.float64)
    normals = None
    if cloud.normals is not None:
        normals = cloud.normals @ R
        # only rescale rows that drifted; a true rotation keeps them exactly as computed
        lengths = np.linalg.norm(normals, axis=1)
        off = np.abs(lengths - 1.0) > ROTATION_TOL
        normals[off] /= lengths[off, None]
    return PointCloud(cloud.points @ R, normals)


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    return np.sqrt(_sq_dists(points, points))
