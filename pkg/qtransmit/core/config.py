"""Process-level settings read from the environment (and an optional .env)."""

from __future__ import annotations

import os
from functools import lru_cache
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field

load_dotenv()


class Settings(BaseModel):
    """Environment-derived settings; experiment parameters live in spec files."""
    workers: Optional[int] = Field(default=None, ge=1)
    debug: bool = False
    tau_geo: float = Field(default=1e-9, gt=0)
    cache_size: int = Field(default=64, ge=1)


def _env_int(name: str) -> Optional[int]:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return None
    return int(raw)


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Read QTRANSMIT_* variables once per process."""
    return Settings(
        workers=_env_int("QTRANSMIT_WORKERS"),
        debug=os.getenv("QTRANSMIT_DEBUG") == "1",
        tau_geo=float(os.getenv("QTRANSMIT_TAU_GEO", "1e-9")),
        cache_size=_env_int("QTRANSMIT_CACHE_SIZE") or 64,
    )


def reset_settings() -> None:
    """Forget cached settings (tests patch the environment)."""
    get_settings.cache_clear()
