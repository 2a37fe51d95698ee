"""Canonical frames from an SVD of a down-sampled skeleton.

The right singular vectors of the sampled points rotate with the cloud, so
projecting the cloud onto them cancels the rotation.  Axis signs are fixed by
requiring every axis to make an acute angle with an anchor point (the point
farthest from the centroid).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AmbiguousAnchor
from .geometry import PointCloud, farthest_point_sample, knn_all, random_sample

ANCHOR_TOL = 1e-6
RANK_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class GlobalFrame:
    V: np.ndarray  # columns are the canonical axes
    anchor: int
    singular_values: np.ndarray
    sample: np.ndarray  # indices of the skeleton points
    warning: str | None = None

    @property
    def rank_deficient(self) -> bool:
        return self.warning is not None


@dataclass(frozen=True, eq=False)
class ProjectedCloud:
    points: np.ndarray
    normals: np.ndarray | None = None

    def __len__(self):
        return self.points.shape[0]


def disambiguate_signs(V, anchor_vec) -> np.ndarray:
    """Negate each column of V pointing away from `anchor_vec`.

    Raises AmbiguousAnchor when some column is within ANCHOR_TOL (relative) of
    orthogonal to the anchor, since its sign cannot be decided robustly.
    """
    V = np.array(V, dtype=np.float64)
    a = np.asarray(anchor_vec, dtype=np.float64)
    a_len = np.linalg.norm(a)
    if a_len <= 1e-12:
        raise ValueError("anchor vector has zero length")
    dots = a @ V
    if np.any(np.abs(dots) < ANCHOR_TOL * a_len):
        raise AmbiguousAnchor(f"anchor is near-orthogonal to axis {int(np.argmin(np.abs(dots)))}")
    V[:, dots < 0] *= -1.0
    return V


def spectrum_warning(s: np.ndarray) -> str | None:
    if s[0] <= 0 or s[1] / s[0] < RANK_TOL:
        return "rank deficient skeleton: sigma2/sigma1 below tolerance"
    if s[0] - s[1] < RANK_TOL * s[0] or s[1] - s[2] < RANK_TOL * s[0]:
        return "repeated singular values: canonical axes are not unique"
    return None


def canonical_frame(cloud: PointCloud, m: int = 32, sampler: str = "fps",
                    seed: int = 0) -> GlobalFrame:
    """SVD frame of an m-point skeleton, signs resolved against the farthest point.

    If the farthest point is (near) orthogonal to some axis, the next-farthest is
    tried, and so on.  Flat or collinear skeletons, where no point decides every
    axis, fall back to per-axis signs and carry a warning instead of raising.

    `sampler` is "fps" (farthest point sampling) or "random" (uniform subset
    drawn from `seed`; index-based, so it commutes with rotation).
    """
    pts = cloud.points
    n = pts.shape[0]
    if m < 3:
        raise ValueError(f"need at least 3 skeleton points, got m={m}")
    if sampler == "fps":
        sample = farthest_point_sample(cloud, m)
    elif sampler == "random":
        sample = np.sort(random_sample(n, m, np.random.default_rng(seed)))
    else:
        raise ValueError(f"unknown sampler {sampler!r}")

    _, s, vt = np.linalg.svd(pts[sample], full_matrices=False)
    V = vt.T

    centered = pts - pts.mean(axis=0)
    radii = np.einsum("ij,ij->i", centered, centered)
    order = np.argsort(-radii, kind="stable")
    warning = spectrum_warning(s)
    for anchor in order:
        try:
            V = disambiguate_signs(V, centered[anchor])
            break
        except AmbiguousAnchor:
            continue
    else:
        anchor = order[0]
        V = _per_axis_signs(V, centered[order])
        warning = warning or "no single point resolves every axis sign"
    return GlobalFrame(V=V, anchor=int(anchor), singular_values=s, sample=sample,
                       warning=warning)


def _per_axis_signs(V: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Fallback for clouds lying in a plane or on a line: each axis takes its sign from
    the farthest point that decides it, or failing that from its largest component."""
    V = V.copy()
    lengths = np.linalg.norm(anchors, axis=1)
    for col in range(3):
        dots = anchors @ V[:, col]
        decisive = np.flatnonzero(np.abs(dots) >= ANCHOR_TOL * lengths)
        if decisive.size:
            sign = np.sign(dots[decisive[0]])
        else:
            sign = np.sign(V[int(np.argmax(np.abs(V[:, col]))), col])
        V[:, col] *= sign
    return V


def project(cloud: PointCloud, frame: GlobalFrame) -> ProjectedCloud:
    normals = None if cloud.normals is None else cloud.normals @ frame.V
    return ProjectedCloud(cloud.points @ frame.V, normals)


def edge_features(projected: ProjectedCloud | np.ndarray, k: int) -> np.ndarray:
    """(N, k, 6) rows [x_i, x_j - x_i] over each point's k nearest neighbors."""
    pts = projected.points if isinstance(projected, ProjectedCloud) else np.asarray(projected)
    nbrs = knn_all(pts, k)
    center = np.broadcast_to(pts[:, None, :], nbrs.shape + (3,))
    return np.concatenate([center, pts[nbrs] - pts[:, None, :]], axis=-1)


def min_separation(s: np.ndarray) -> float:
    """Smallest gap between consecutive singular values, relative to the largest."""
    return float(min(s[0] - s[1], s[1] - s[2]) / s[0])
