import os
from pathlib import Path

import numpy as np
import pytest

from ndf_lab import kernels

MNIST_DIR = Path(os.environ.get("NDF_LAB_MNIST", "/root/data/mnist"))


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    """Run the test once per importable kernel backend."""
    previous = kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def rel_err(analytic, numeric, floor=1e-7):
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def central_diff(f, param, step=1e-5):
    """Central finite differences of scalar ``f()`` w.r.t. every entry of ``param``."""
    grad = np.zeros_like(param)
    flat, gflat = param.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        up = f()
        flat[i] = keep - step
        down = f()
        flat[i] = keep
        gflat[i] = (up - down) / (2 * step)
    return grad
