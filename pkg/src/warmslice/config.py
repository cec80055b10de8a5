from __future__ import annotations

import logging
import math
import os
from collections.abc import Callable, Mapping
from dataclasses import dataclass
from pathlib import Path

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class ConfigError(ValueError):
    """Raised when runtime configuration is incomplete or invalid."""


def _parsed[T](
    env: Mapping[str, str],
    name: str,
    default: T,
    convert: Callable[[str], T],
    kind: str,
) -> T:
    """Read ``name`` from ``env``; unset or blank settings keep ``default``."""
    raw = env.get(name, "").strip()
    if not raw:
        return default
    try:
        return convert(raw)
    except ValueError as error:
        raise ConfigError(f"{name}={raw!r} is not {kind}") from error


def _count(env: Mapping[str, str], name: str, default: int) -> int:
    value = _parsed(env, name, default, int, "an integer")
    if value < 1:
        raise ConfigError(f"{name} must be at least 1, got {value}")
    return value


def _seconds(env: Mapping[str, str], name: str, default: float) -> float:
    value = _parsed(env, name, default, float, "a number of seconds")
    if not math.isfinite(value) or value <= 0:
        raise ConfigError(f"{name} must be a finite duration above zero, got {value}")
    return value


def _log_level(env: Mapping[str, str], name: str, default: str) -> str:
    value = env.get(name, default).strip().upper()
    if value not in LOG_LEVELS:
        raise ConfigError(f"{name} must be one of {', '.join(LOG_LEVELS)}")
    return value


@dataclass(frozen=True)
class Settings:
    out_dir: Path
    log_level_name: str
    poll_interval_us: int
    watch_timeout_seconds: float
    repetitions: int

    @property
    def log_level(self) -> int:
        return logging.getLevelNamesMapping()[self.log_level_name]

    @classmethod
    def from_env(cls, env: Mapping[str, str] | None = None) -> Settings:
        values = os.environ if env is None else env
        out_dir = values.get("WARMSLICE_OUT", "out").strip()
        if not out_dir:
            raise ConfigError("WARMSLICE_OUT must not be empty")
        return cls(
            out_dir=Path(out_dir),
            log_level_name=_log_level(values, "WARMSLICE_LOG_LEVEL", "INFO"),
            poll_interval_us=_count(values, "WARMSLICE_POLL_US", 1000),
            watch_timeout_seconds=_seconds(
                values, "WARMSLICE_WATCH_TIMEOUT_SECONDS", 30.0
            ),
            repetitions=_count(values, "WARMSLICE_REPETITIONS", 5),
        )
