import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for the reference oracles

from vidvae.config import ModelConfig, image_config_of


@pytest.fixture(scope="session")
def tiny_cfg():
    """Small hybrid video config: rho_s=4, rho_t=2, fast enough for unit tests."""
    return ModelConfig(latent_channels=2, base_channels=8, channel_multipliers=(1, 2),
                       spatial_down_levels=2, temporal_down_levels=1, resblocks_per_level=1,
                       norm_groups=4, discriminator_layers=2).validate()


@pytest.fixture(scope="session")
def tiny_image_cfg(tiny_cfg):
    return image_config_of(tiny_cfg)


@pytest.fixture(scope="session")
def desk_cfg():
    return ModelConfig().validate()
