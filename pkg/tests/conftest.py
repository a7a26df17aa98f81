import os

# Cap BLAS threading before numpy loads: the dense solves here are small
# enough that thread wake-up costs dominate, and a fixed thread count keeps
# results bitwise reproducible across runs.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import numpy as np
import pytest

from cloudmorph import PointCloud


def make_cloud(n: int, seed: int, cloud_id: str = "cloud") -> PointCloud:
    """Random colored cloud, roughly centered with unit-order extent."""
    rng = np.random.default_rng(seed)
    return PointCloud(rng.normal(size=(n, 3)), rng.uniform(size=(n, 3)), cloud_id)


def make_normalized_points(n: int, rng: np.random.Generator) -> np.ndarray:
    pts = rng.normal(size=(n, 3))
    pts = pts - pts.mean(axis=0)
    return pts / np.sqrt(np.mean(np.sum(pts * pts, axis=1)))


def rms(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.sum((np.asarray(a) - np.asarray(b)) ** 2, axis=1))))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_cloud():
    return make_cloud(40, seed=7, cloud_id="small")
