import pytest

from radcom.config import RadarConfig


@pytest.fixture
def cfg():
    return RadarConfig()


@pytest.fixture
def cfg20():
    return RadarConfig(B_c=20e6)
