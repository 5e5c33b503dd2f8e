import numpy as np
import pytest

from src.config import BandWeights, FilterBankConfig, WaldConfig
from src.gauss_filter import build_filter
from src.raster import Raster
from src.wald_sim import make_scene, simulate


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def random_raster(rng):
    def make(width=16, height=16, bands=4):
        return Raster(rng.random((bands, height, width)))

    return make


@pytest.fixture(scope="session")
def default_bank():
    return build_filter(FilterBankConfig())


@pytest.fixture(scope="session")
def uniform4():
    return BandWeights.uniform(4)


@pytest.fixture(scope="session")
def wald_scene():
    """128x128 4-band blobs scene degraded by 4 without noise."""
    gt = make_scene("blobs", 128, 128, 4, seed=7)
    return simulate(gt, WaldConfig(ratio=4))


@pytest.fixture(scope="session")
def desk_scene():
    """Small 32x32 scene for loops that fuse many times."""
    gt = make_scene("blobs", 32, 32, 4, seed=11)
    return simulate(gt, WaldConfig(ratio=4))
