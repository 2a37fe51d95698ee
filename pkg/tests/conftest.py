import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rotinv.config import RunConfig  # noqa: E402
from rotinv.geometry import PointCloud, center_and_normalize, estimate_normals  # noqa: E402
from rotinv.network import make_batch  # noqa: E402

TINY = RunConfig(k=4, m=8, local_dims=(8, 12), global_dims=(8, 12), classifier_dims=(10, 6),
                 n_classes=3, lr=0.05, epochs=2, batch=2, n_points=64)


def random_cloud(rng, n=24, scale=(1.0, 0.6, 0.3), normals_k=6):
    cloud = center_and_normalize(PointCloud(rng.normal(size=(n, 3)) * scale))
    return estimate_normals(cloud, normals_k)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    return TINY


@pytest.fixture
def tiny_batch():
    rng = np.random.default_rng(0)
    clouds = [random_cloud(rng) for _ in range(3)]
    return make_batch(TINY, clouds, [0, 1, 2])


# one line per acceptance criterion, printed after the run
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
