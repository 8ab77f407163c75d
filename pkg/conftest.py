import pytest

from qtransmit.core.cache import clear_cache
from qtransmit.core.config import reset_settings


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte Carlo runs")


@pytest.fixture(autouse=True)
def _fresh_settings(monkeypatch):
    """Each test sees only the environment it sets itself."""
    for name in ("QTRANSMIT_WORKERS", "QTRANSMIT_DEBUG", "QTRANSMIT_TAU_GEO", "QTRANSMIT_CACHE_SIZE"):
        monkeypatch.delenv(name, raising=False)
    reset_settings()
    yield
    reset_settings()
    clear_cache()
