import pytest

from manusim.config import default_config, joint_specs


@pytest.fixture
def cfg() -> dict:
    return default_config()


@pytest.fixture
def specs(cfg):
    return joint_specs(cfg)
