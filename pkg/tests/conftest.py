import numpy as np
import pytest

from genhash.model import ModelParams


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_params(rng, d, l, domain="zero-one", scale=1.0):
    """Random finite model with O(1) parameter magnitudes."""
    return ModelParams(
        rng.normal(size=(d, l), scale=scale),
        rng.normal(size=(d, l), scale=scale),
        rng.normal(size=l, scale=scale),
        float(rng.normal(scale=0.3)),
        domain,
    )
