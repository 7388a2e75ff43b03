import pytest

from handdigit.config import Settings, get_settings


@pytest.fixture(autouse=True)
def fresh_settings():
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


def test_settings_read_prefixed_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("HANDDIGIT_THREADS", "3")
    monkeypatch.setenv("HANDDIGIT_LOG_LEVEL", "DEBUG")
    monkeypatch.setenv("HANDDIGIT_CONFIG_PATH", str(tmp_path / "pipeline.json"))
    settings = get_settings()
    assert settings.worker_count == 3
    assert settings.log_level == "DEBUG"
    assert settings.config_path == tmp_path / "pipeline.json"


def test_worker_count_falls_back_to_cpus(monkeypatch):
    monkeypatch.delenv("HANDDIGIT_THREADS", raising=False)
    assert 1 <= Settings(_env_file=None).worker_count <= 8
    assert Settings(_env_file=None, threads=0).worker_count >= 1


def test_settings_are_cached():
    assert get_settings() is get_settings()
