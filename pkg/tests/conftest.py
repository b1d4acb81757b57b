import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def dft_matrix_product(x):
    """Direct O(n^2) DFT along the last axis."""
    n = x.shape[-1]
    k = np.arange(n)
    return x @ np.exp(-2j * np.pi * np.outer(k, k) / n).T
