"""ASCII point files, feature CSV export and JSON/CSV report writers."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .canonical import ProjectedCloud
from .errors import IoError, MixedNormals, ParseError
from .geometry import NORMAL_TOL, PointCloud
from .local import FEATURE_NAMES


def parse_xyzn(path: str | Path) -> PointCloud:
    """Read whitespace-separated `x y z [nx ny nz]` rows; `#` lines are comments."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    rows = []
    width = None
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) not in (3, 6):
            raise ParseError(f"expected 3 or 6 columns, got {len(parts)}", lineno)
        try:
            values = [float(p) for p in parts]
        except ValueError:
            raise ParseError(f"non-numeric value in {stripped!r}", lineno) from None
        if not np.all(np.isfinite(values)):
            raise ParseError("non-finite value", lineno)
        if width is None:
            width = len(parts)
        elif width != len(parts):
            raise MixedNormals("some rows have normals and others do not", lineno)
        rows.append(values)
    if not rows:
        raise ParseError("file contains no points")
    data = np.array(rows)
    normals = None
    if width == 6:
        normals = data[:, 3:]
        lengths = np.linalg.norm(normals, axis=1)
        bad = np.flatnonzero(lengths == 0)
        if bad.size:
            raise ParseError("zero-length normal", _data_line(text, int(bad[0])))
        # anything the container would reject as non-unit gets rescaled; rows already
        # unit to within its tolerance are kept exactly as written
        off = np.abs(lengths - 1.0) > NORMAL_TOL
        normals = normals.copy()
        normals[off] /= lengths[off, None]
    return PointCloud(data[:, :3], normals)


def _data_line(text: str, index: int) -> int:
    seen = -1
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            seen += 1
            if seen == index:
                return lineno
    return 0


def write_xyzn(path: str | Path, cloud: PointCloud, precision: int = 17):
    cols = cloud.points if cloud.normals is None else np.hstack([cloud.points, cloud.normals])
    lines = [" ".join(f"{v:.{precision}g}" for v in row) for row in cols]
    _write_text(path, "\n".join(lines) + "\n")


def _write_text(path, text: str):
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _fmt(v) -> str:
    return f"{float(v):.9g}"


def export_features(path: str | Path, local: np.ndarray, projected: ProjectedCloud | np.ndarray):
    """CSV with a local-feature section (one row per point/neighbor) and a projection section.

    Each section starts with its own header line whose first field names the section.
    """
    local = np.asarray(local)
    pts = projected.points if isinstance(projected, ProjectedCloud) else np.asarray(projected)
    lines = [",".join(("section", "point", "neighbor") + FEATURE_NAMES)]
    for i in range(local.shape[0]):
        for j in range(local.shape[1]):
            lines.append(",".join(["local", str(i), str(j)] + [_fmt(v) for v in local[i, j]]))
    lines.append("section,point,x,y,z")
    for i, row in enumerate(pts):
        lines.append(",".join(["projected", str(i)] + [_fmt(v) for v in row]))
    _write_text(path, "\n".join(lines) + "\n")


def read_features(path: str | Path):
    """Inverse of export_features: returns (local (N, k, 8), projected (N, 3))."""
    local_rows, proj_rows = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if row[0] == "local":
                local_rows.append((int(row[1]), int(row[2]), [float(v) for v in row[3:]]))
            elif row[0] == "projected":
                proj_rows.append([float(v) for v in row[2:]])
    n = max(r[0] for r in local_rows) + 1 if local_rows else 0
    k = max(r[1] for r in local_rows) + 1 if local_rows else 0
    local = np.zeros((n, k, len(FEATURE_NAMES)))
    for i, j, vals in local_rows:
        local[i, j] = vals
    return local, np.array(proj_rows).reshape(-1, 3)


def write_json(path: str | Path, data):
    """Stable JSON: sorted keys, fixed indentation, trailing newline."""
    _write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_rows_csv(path: str | Path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(v if isinstance(v, str) else _fmt(v) for v in row) for row in rows]
    _write_text(path, "\n".join(lines) + "\n")
