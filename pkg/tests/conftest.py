import logging

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("dw2", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("dw2")


@pytest.fixture(autouse=True)
def _quiet_logs(caplog):
    caplog.set_level(logging.CRITICAL, logger="dw2")
    yield
