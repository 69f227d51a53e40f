import numpy as np
import pytest

from exactct.grids import BinaryMask, CtVolume, ProbabilityVolume


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_volume(rng, dims=(6, 5, 4), spacing=(1.0, 1.0, 1.0)):
    data = rng.normal(0.0, 100.0, size=dims).astype(np.float32)
    return CtVolume(data, spacing)


def random_mask(rng, dims=(16, 16, 16), density=0.3):
    return BinaryMask(rng.random(dims) < density)


def random_prob(rng, dims=(8, 8, 8)):
    return ProbabilityVolume(rng.random(dims).astype(np.float32))
