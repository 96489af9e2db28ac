"""Runtime configuration for the HTTP service and CLI.

Sources, later wins: built-in defaults, a JSON config file, then
``SPATIAL_RAG_*`` environment variables.  The config is a plain dataclass so
programmatic embedding stays trivial.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .backends import (
    DEFAULT_MODEL,
    ChatBackend,
    MockChatBackend,
    RemoteChatBackend,
    ReplayBackend,
)

ENV_PREFIX = "SPATIAL_RAG_"


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080

    backend: str = "mock"  # mock | remote | replay
    mock_mode: str = "oracle"
    mock_delay_ms: float = 0.0
    mock_delay_band: Optional[tuple] = None  # (low_ms, high_ms) overrides mock_delay_ms
    mock_seed: int = 0
    mock_sleep: bool = False
    remote_base_url: str = ""
    remote_api_key: str = ""
    remote_timeout_s: float = 120.0
    replay_path: str = ""
    model: str = DEFAULT_MODEL

    default_limit: int = 100
    max_limit: int = 1000
    token_budget: Optional[int] = None
    heartbeat_s: float = 15.0
    events_topic: str = "entities.changed"

    # preload at startup (optional)
    dataset_path: str = ""
    dataset_format: str = "entity-records"
    dataset_expected: Optional[int] = None

    # enable the live context cache for this bbox [minlon, minlat, maxlon, maxlat]
    cache_bbox: Optional[tuple] = None

    ui_dir: str = ""

    def __post_init__(self):
        if self.backend not in ("mock", "remote", "replay"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.backend == "remote" and not self.remote_base_url:
            raise ValueError("remote backend needs remote_base_url")
        if self.backend == "replay" and not self.replay_path:
            raise ValueError("replay backend needs replay_path")
        if self.default_limit < 1 or self.max_limit < self.default_limit:
            raise ValueError("need 1 <= default_limit <= max_limit")
        if self.mock_delay_band is not None:
            low, high = self.mock_delay_band
            if low > high:
                raise ValueError("mock_delay_band low must be <= high")
            self.mock_delay_band = (float(low), float(high))
        if self.cache_bbox is not None:
            self.cache_bbox = tuple(float(v) for v in self.cache_bbox)
            if len(self.cache_bbox) != 4:
                raise ValueError("cache_bbox needs 4 numbers")


_BOOL_TRUE = ("1", "true", "yes", "on")


def _coerce(name: str, raw: str):
    if name in ("port", "mock_seed", "default_limit", "max_limit", "dataset_expected",
                "token_budget"):
        return int(raw)
    if name in ("mock_delay_ms", "heartbeat_s", "remote_timeout_s"):
        return float(raw)
    if name == "mock_sleep":
        return raw.strip().lower() in _BOOL_TRUE
    if name in ("mock_delay_band", "cache_bbox"):
        parts = [float(p) for p in raw.split(",") if p.strip()]
        return tuple(parts)
    return raw


def load_config(path: Optional[Path] = None, env: Optional[dict] = None) -> ServiceConfig:
    """Defaults, overlaid by a JSON file, overlaid by SPATIAL_RAG_* vars."""
    values: dict = {}
    if path is not None:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: config file must hold a JSON object")
        values.update(raw)
    env = os.environ if env is None else env
    known = {f.name for f in fields(ServiceConfig)}
    for key, raw in env.items():
        if not key.startswith(ENV_PREFIX):
            continue
        name = key[len(ENV_PREFIX):].lower()
        if name in known:
            values[name] = _coerce(name, raw)
    for name in ("mock_delay_band", "cache_bbox"):
        if isinstance(values.get(name), list):
            values[name] = tuple(values[name])
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return ServiceConfig(**values)


def build_backend(config: ServiceConfig) -> ChatBackend:
    """Construct the chat backend the config selects."""
    if config.backend == "mock":
        delay = config.mock_delay_band if config.mock_delay_band is not None else config.mock_delay_ms
        return MockChatBackend(
            mode=config.mock_mode,
            delay_ms=delay,
            seed=config.mock_seed,
            sleep=config.mock_sleep,
        )
    if config.backend == "remote":
        return RemoteChatBackend(
            config.remote_base_url,
            api_key=config.remote_api_key or None,
            timeout_s=config.remote_timeout_s,
        )
    return ReplayBackend(Path(config.replay_path))
