"""Synthetic anisotropic shapes with analytic normals, and the 5-class dataset.

Every kind is elongated along x, medium along y and thin along z so that the
skeleton's singular values stay well apart.  Surfaces are sampled uniformly
by area; composite shapes split points across faces by largest-remainder
apportionment of the face areas, so face counts are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import PointCloud, center_and_normalize, unit_rows

KINDS = ("box", "cylinder", "cone", "ellipsoid", "l_bracket")

BOX_HALF_EXTENTS = (1.0, 0.6, 0.3)
ELLIPSOID_AXES = (1.0, 0.6, 0.3)
CYLINDER = {"half_length": 1.0, "axes": (0.5, 0.25)}
CONE = {"half_length": 1.0, "axes": (0.6, 0.3)}  # base at x=-1, apex at x=+1
# Two plates meeting at a corner: a long flat base and a shorter upright.
L_BASE = ((-1.0, 1.0), (-0.45, 0.45), (-0.05, 0.05))
L_UPRIGHT = ((-1.0, -0.9), (-0.45, 0.45), (0.05, 0.75))


@dataclass(frozen=True)
class ShapeSpec:
    kind: str
    n_points: int = 256
    jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}; expected one of {KINDS}")
        if self.n_points < 64:
            raise ValueError("n_points must be at least 64")
        if self.jitter < 0:
            raise ValueError("jitter must be non-negative")


def apportion(weights, n: int) -> np.ndarray:
    """Integer counts summing to n, proportional to weights (largest remainder)."""
    w = np.asarray(weights, dtype=np.float64)
    exact = n * w / w.sum()
    counts = np.floor(exact).astype(int)
    short = n - counts.sum()
    order = np.argsort(-(exact - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def _box_faces(bounds):
    """(axis, sign, area) for the six faces of an axis-aligned box."""
    lens = [hi - lo for lo, hi in bounds]
    faces = []
    for axis in range(3):
        others = [a for a in range(3) if a != axis]
        area = lens[others[0]] * lens[others[1]]
        faces.append((axis, -1.0, area))
        faces.append((axis, 1.0, area))
    return faces


def _sample_face(rng, bounds, axis, sign, n):
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    pts = lo + rng.random((n, 3)) * (hi - lo)
    pts[:, axis] = hi[axis] if sign > 0 else lo[axis]
    normals = np.zeros((n, 3))
    normals[:, axis] = sign
    return pts, normals


def sample_box(rng, n, bounds):
    faces = _box_faces(bounds)
    counts = apportion([f[2] for f in faces], n)
    parts = [_sample_face(rng, bounds, a, s, c) for (a, s, _), c in zip(faces, counts)]
    return np.concatenate([p for p, _ in parts]), np.concatenate([q for _, q in parts])


def box_face_labels(points, bounds, tol=1e-12):
    """Index (0..5, order of `_box_faces`) of the face each box-surface point lies on."""
    labels = np.full(len(points), -1)
    for i, (axis, sign, _) in enumerate(_box_faces(bounds)):
        plane = bounds[axis][1] if sign > 0 else bounds[axis][0]
        on = (np.abs(points[:, axis] - plane) <= tol) & (labels < 0)
        labels[on] = i
    return labels


def sample_ellipsoid(rng, n, axes):
    """Uniform-by-area samples via rejection on the sphere-to-ellipsoid stretch."""
    a = np.asarray(axes, dtype=np.float64)
    # area element of the stretched sphere is |a*b*c * (x/a, y/b, z/c)| on the unit sphere
    bound = np.prod(a) / a.min()
    out = []
    have = 0
    while have < n:
        s = unit_rows(rng.normal(size=(2 * n, 3)))
        weight = np.prod(a) * np.linalg.norm(s / a, axis=1)
        keep = s[rng.random(len(s)) * bound < weight]
        out.append(keep)
        have += len(keep)
    sphere = np.concatenate(out)[:n]
    pts = sphere * a
    normals = unit_rows(pts / a**2)
    return pts, normals


def _ellipse_rejection(rng, n, axes):
    """Points uniform in arc length on an ellipse with semi-axes (p, q)."""
    p, q = axes
    bound = max(p, q)
    out, have = [], 0
    while have < n:
        t = rng.uniform(0.0, 2 * np.pi, size=2 * n)
        speed = np.hypot(p * np.sin(t), q * np.cos(t))
        keep = t[rng.random(len(t)) * bound < speed]
        out.append(keep)
        have += len(keep)
    return np.concatenate(out)[:n]


def _ellipse_perimeter(p, q, steps=4096):
    t = np.linspace(0.0, 2 * np.pi, steps, endpoint=False)
    return float(np.mean(np.hypot(p * np.sin(t), q * np.cos(t))) * 2 * np.pi)


def _disk(rng, n, axes):
    r = np.sqrt(rng.random(n))
    t = rng.uniform(0.0, 2 * np.pi, size=n)
    return r * axes[0] * np.cos(t), r * axes[1] * np.sin(t)


def sample_cylinder(rng, n, half_length, axes):
    p, q = axes
    side_area = _ellipse_perimeter(p, q) * 2 * half_length
    cap_area = np.pi * p * q
    n_side, n_lo, n_hi = apportion([side_area, cap_area, cap_area], n)

    t = _ellipse_rejection(rng, n_side, axes)
    x = rng.uniform(-half_length, half_length, size=n_side)
    y, z = p * np.cos(t), q * np.sin(t)
    side = np.stack([x, y, z], axis=1)
    side_n = unit_rows(np.stack([np.zeros(n_side), y / p**2, z / q**2], axis=1))

    caps, caps_n = [], []
    for count, sign in ((n_lo, -1.0), (n_hi, 1.0)):
        cy, cz = _disk(rng, count, axes)
        caps.append(np.stack([np.full(count, sign * half_length), cy, cz], axis=1))
        caps_n.append(np.tile([sign, 0.0, 0.0], (count, 1)))
    return np.concatenate([side, *caps]), np.concatenate([side_n, *caps_n])


def _cone_side_point(s, t, half_length, axes):
    # s in [0, 1]: 0 at the apex (x=+L), 1 at the base (x=-L)
    p, q = axes
    x = half_length * (1.0 - 2.0 * s)
    return np.stack([x, s * p * np.cos(t), s * q * np.sin(t)], axis=-1)


def sample_cone(rng, n, half_length, axes):
    p, q = axes
    L = 2.0 * half_length

    def area_element(s, t):
        # |dX/ds x dX/dt| for X(s,t) = (L/2 (1-2s), s p cos t, s q sin t)
        ds = np.stack([np.full_like(t, -L), p * np.cos(t), q * np.sin(t)], axis=-1)
        dt = np.stack([np.zeros_like(t), -s * p * np.sin(t), s * q * np.cos(t)], axis=-1)
        return np.linalg.norm(np.cross(ds, dt), axis=-1)

    grid_s, grid_t = np.meshgrid(np.linspace(0, 1, 257), np.linspace(0, 2 * np.pi, 257))
    dens = area_element(grid_s, grid_t)
    side_area = float(dens.mean() * 2 * np.pi)
    base_area = np.pi * p * q
    n_side, n_base = apportion([side_area, base_area], n)
    bound = dens.max() * 1.01

    out, have = [], 0
    while have < n_side:
        s = rng.random(2 * n_side + 8)
        t = rng.uniform(0.0, 2 * np.pi, size=s.shape)
        keep = rng.random(s.shape) * bound < area_element(s, t)
        out.append(np.stack([s[keep], t[keep]], axis=1))
        have += int(keep.sum())
    st = np.concatenate(out)[:n_side]
    side = _cone_side_point(st[:, 0], st[:, 1], half_length, axes)
    # gradient of (y/p)^2 + (z/q)^2 - s(x)^2 with s(x) = (L/2 - x) / L
    s_of_x = (half_length - side[:, 0]) / L
    grad = np.stack([2 * s_of_x / L, 2 * side[:, 1] / p**2, 2 * side[:, 2] / q**2], axis=1)
    side_n = unit_rows(grad)

    by, bz = _disk(rng, n_base, axes)
    base = np.stack([np.full(n_base, -half_length), by, bz], axis=1)
    base_n = np.tile([-1.0, 0.0, 0.0], (n_base, 1))
    return np.concatenate([side, base]), np.concatenate([side_n, base_n])


def _on_closed(points, bounds, tol=1e-12):
    ok = np.ones(len(points), dtype=bool)
    for axis, (lo, hi) in enumerate(bounds):
        ok &= (points[:, axis] >= lo - tol) & (points[:, axis] <= hi + tol)
    return ok


def _visible_area(bounds, other, axis, sign, area):
    """Face area not covered by the (closed) other box."""
    plane = bounds[axis][1] if sign > 0 else bounds[axis][0]
    lo, hi = other[axis]
    if not lo <= plane <= hi:
        return area
    overlap = 1.0
    for a in range(3):
        if a != axis:
            overlap *= max(0.0, min(bounds[a][1], other[a][1]) - max(bounds[a][0], other[a][0]))
    return area - overlap


def sample_l_bracket(rng, n):
    """Outer surface of the union of a base plate and an upright plate."""
    parts = []
    for own, other in ((L_BASE, L_UPRIGHT), (L_UPRIGHT, L_BASE)):
        for axis, sign, area in _box_faces(own):
            visible = _visible_area(own, other, axis, sign, area)
            if visible > 1e-12:
                parts.append((own, other, axis, sign, visible))
    counts = apportion([p[4] for p in parts], n)
    pts_out, nrm_out = [], []
    for (own, other, axis, sign, _), count in zip(parts, counts):
        got_p, got_n, have = [], [], 0
        while have < count:
            p, q = _sample_face(rng, own, axis, sign, 2 * count + 8)
            keep = ~_on_closed(p, other)
            got_p.append(p[keep])
            got_n.append(q[keep])
            have += int(keep.sum())
        pts_out.append(np.concatenate(got_p)[:count])
        nrm_out.append(np.concatenate(got_n)[:count])
    return np.concatenate(pts_out), np.concatenate(nrm_out)


def sample_surface(kind: str, n: int, rng: np.random.Generator):
    """Raw (un-normalized) surface samples and outward unit normals."""
    if kind == "box":
        half = BOX_HALF_EXTENTS
        return sample_box(rng, n, [(-h, h) for h in half])
    if kind == "ellipsoid":
        return sample_ellipsoid(rng, n, ELLIPSOID_AXES)
    if kind == "cylinder":
        return sample_cylinder(rng, n, CYLINDER["half_length"], CYLINDER["axes"])
    if kind == "cone":
        return sample_cone(rng, n, CONE["half_length"], CONE["axes"])
    if kind == "l_bracket":
        return sample_l_bracket(rng, n)
    raise ValueError(f"unknown shape kind {kind!r}")


def make_shape(spec: ShapeSpec) -> PointCloud:
    """Deterministic, centered, unit-ball-normalized sample of `spec.kind`.

    Normals are the analytic surface normals (computed before jitter).
    """
    rng = np.random.default_rng(spec.seed)
    pts, normals = sample_surface(spec.kind, spec.n_points, rng)
    # shuffle so faces are not stored contiguously
    perm = rng.permutation(len(pts))
    pts, normals = pts[perm], normals[perm]
    if spec.jitter > 0:
        pts = pts + rng.normal(scale=spec.jitter, size=pts.shape)
    return center_and_normalize(PointCloud(pts, normals))


def sample_seed(seed: int, split: str, label: int, index: int) -> int:
    split_code = {"train": 0, "test": 1}[split]
    return int(np.random.SeedSequence([seed, split_code, label, index]).generate_state(1)[0])


def make_dataset(n_per_class: int, split: str, n_points: int = 256, jitter: float = 0.01,
                 seed: int = 0, kinds=KINDS):
    """Balanced list of clouds and integer labels (label = index into `kinds`)."""
    clouds, labels = [], []
    for label, kind in enumerate(kinds):
        for i in range(n_per_class):
            spec = ShapeSpec(kind, n_points, jitter, sample_seed(seed, split, label, i))
            clouds.append(make_shape(spec))
            labels.append(label)
    return clouds, np.asarray(labels, dtype=np.intp)
