import pytest
from hypothesis import HealthCheck, settings

from hetnet_hotspot.config import preset_config, preset_scenario

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def cfg():
    return preset_config()


@pytest.fixture(scope="session")
def perfect():
    return preset_scenario(offset_m=0.0)


@pytest.fixture(scope="session")
def baseline():
    return preset_scenario(small_cell=False)


@pytest.fixture(scope="session")
def offset60():
    return preset_scenario(offset_m=60.0)


@pytest.fixture(scope="session")
def offset120():
    return preset_scenario(offset_m=120.0)
