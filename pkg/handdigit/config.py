"""Application configuration."""

from __future__ import annotations

import os
from functools import lru_cache
from pathlib import Path
from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Environment-driven settings for the recognizer and its CLI."""

    model_config = SettingsConfigDict(
        env_prefix="HANDDIGIT_", env_file=".env", env_file_encoding="utf-8"
    )

    threads: Optional[int] = None  # caps worker threads; None = cpu count (max 8)
    log_level: str = "WARNING"
    config_path: Optional[Path] = None  # default pipeline config JSON

    @property
    def worker_count(self) -> int:
        """Return the effective number of worker threads."""

        if self.threads is not None and self.threads >= 1:
            return self.threads
        return max(1, min(8, os.cpu_count() or 1))


@lru_cache
def get_settings() -> Settings:
    """Return a cached settings instance."""

    return Settings()


settings = get_settings()
