import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_psd(rng, d, rank=None, scale=1.0):
    r = d if rank is None else rank
    A = rng.standard_normal((d, r))
    return scale * A @ A.T / r
