import math

import numpy as np
import pytest
from hypothesis import settings

from czirok.model import GSpec, KernelSpec, ModelParams

# primera llamada a las funciones numba incluye la compilación
settings.register_profile("czirok", deadline=None, max_examples=50)
settings.load_profile("czirok")

XI_E_H6 = 5.0 * math.sqrt(2.0 / 6.0)


@pytest.fixture
def kernel():
    return KernelSpec.top_hat(1.0, 10.0)


@pytest.fixture
def cubic6():
    return GSpec.cubic(6.0)


@pytest.fixture
def xi_e():
    return XI_E_H6


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_params(n=10, sigma=0.0, averaging="symmetric", g=None, steps=0, seed=0, L=10.0, r=1.0):
    return ModelParams(n=n, L=L, sigma=sigma, dt=0.1, g=g or GSpec.cubic(6.0),
                       kernel=KernelSpec.top_hat(r, L), averaging=averaging, steps=steps, seed=seed)
