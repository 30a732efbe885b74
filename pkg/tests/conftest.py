import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from kanzip.basis import BasisSpec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=["bspline", "rbf", "gram"])
def any_basis(request):
    if request.param == "bspline":
        return BasisSpec("bspline", degree=3, grid_size=5, grid_min=-1.0, grid_max=1.0)
    if request.param == "rbf":
        return BasisSpec("rbf", num_centers=8, grid_min=-2.0, grid_max=2.0)
    return BasisSpec("gram", degree=3)


def mnist_dir():
    """Directory with the real MNIST IDX files, or None if unavailable."""
    candidates = [
        os.environ.get("KANZIP_DATA_DIR"),
        os.path.join(os.path.dirname(__file__), "..", "data", "mnist"),
        os.path.join(os.path.dirname(__file__), "..", "data"),
    ]
    for d in candidates:
        if d and os.path.exists(os.path.join(d, "train-images-idx3-ubyte")):
            return d
        if d and os.path.exists(os.path.join(d, "train-images-idx3-ubyte.gz")):
            return d
    return None
