"""Shared fixtures: seeded rngs, small random images, and tiny networks."""

import numpy as np
import pytest

from i2v.networks import BlindSpotNet, NoiseExtractor


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def image10(rng):
    """A (1,3,10,10) image in [0,1]: divisible by strides 2 and 5."""
    from i2v.tensor import Tensor

    return Tensor(rng.random((1, 3, 10, 10), dtype=np.float64).astype(np.float32))


@pytest.fixture
def batch20(rng):
    """A (2,3,20,20) batch in [0,1]."""
    from i2v.tensor import Tensor

    return Tensor(rng.random((2, 3, 20, 20), dtype=np.float64).astype(np.float32))


@pytest.fixture
def tiny_f():
    return BlindSpotNet.create(np.random.default_rng(7), base=4)


@pytest.fixture
def tiny_h():
    return NoiseExtractor.create(np.random.default_rng(8), width=8, n_res=1)
