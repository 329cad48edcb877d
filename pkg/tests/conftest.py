import numpy as np
import pytest

from cuspspec.fields import Box, constant_field, gaussian, zero_field
from cuspspec.kernels import separable_pair_expansion


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_box():
    return Box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


@pytest.fixture
def gaussian_pe():
    """xi = 0, eta = exp(-|t|^2) exp(-|x|^2); the closed-form fixture."""
    g = gaussian(3)
    z = zero_field(3)
    return separable_pair_expansion(z, z, g, g)
