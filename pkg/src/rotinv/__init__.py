"""Rotation-invariant point-cloud features and classifier."""

from .config import DESK_CONFIG, RunConfig, load_config
from .errors import *  # noqa: F401,F403
from .geometry import (PointCloud, apply_rotation, center_and_normalize, estimate_normals,
                       farthest_point_sample, knn, knn_all, random_rotation)

__version__ = "0.1.0"
