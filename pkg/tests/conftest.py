import numpy as np
import pytest

from app.model import SynthConfig
from app.utils.logger import logger


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def aligned_cfg() -> SynthConfig:
    """Noiseless data whose semantic neighborhoods equal the visual ones."""
    return SynthConfig(
        num_classes=16, images_per_class=2, visual_dim=6, semantic_dim=8,
        noise_sigma=0.0, discrepancy_rho=0.0, num_unseen=4, seed=3,
    )


@pytest.fixture
def small_cfg() -> SynthConfig:
    return SynthConfig(
        num_classes=14, images_per_class=4, visual_dim=6, semantic_dim=8,
        noise_sigma=0.3, discrepancy_rho=1.5, num_unseen=4, seed=7,
    )


@pytest.fixture(autouse=True)
def _quiet_logger():
    logger.set_verbose(False)
    yield
    logger.set_verbose(False)
