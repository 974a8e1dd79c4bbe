"""Deployment configuration, sourced from SOC_* environment variables."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

_PACKAGE_DATA = Path(__file__).parent / "data"


@dataclass
class Config:
    bind_addr: str = "127.0.0.1:8080"
    metrics_addr: str = ""  # empty: serve /metrics on the main bind address
    mode: str = "mock"  # mock | live
    gateway_url: str = ""
    gateway_key: str = ""
    gateway_model: str = "tutor-default"
    daily_limit: int = 8
    timezone: str = "UTC"
    token_budget: int = 8000
    grounding_budget: int = 2000
    top_k: int = 4
    min_score: float = 0.25
    relevance_threshold: float = 0.15
    temperature: float = 0.3
    max_output_tokens: int = 700
    token_lifetime_ms: int = 12 * 3600 * 1000
    snapshot_interval_s: int = 60
    snapshot_every_events: int = 10_000
    data_dir: str = "./soc-data"
    fsync: bool = True
    pattern_file: str = str(_PACKAGE_DATA / "patterns.txt")
    template_file: str = str(_PACKAGE_DATA / "templates.json")
    stopword_file: str = str(_PACKAGE_DATA / "stopwords.txt")
    bootstrap_admin: str = ""  # "handle:password", created at startup if absent
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_env(cls, env: dict | None = None) -> "Config":
        env = dict(os.environ if env is None else env)

        def get(name, default, cast=str):
            raw = env.get(name)
            if raw is None or raw == "":
                return default
            if cast is bool:
                return raw.lower() not in ("0", "false", "no", "off")
            return cast(raw)

        return cls(
            bind_addr=get("SOC_BIND_ADDR", cls.bind_addr),
            metrics_addr=get("SOC_METRICS_ADDR", cls.metrics_addr),
            mode=get("SOC_MODE", cls.mode),
            gateway_url=get("SOC_GATEWAY_URL", cls.gateway_url),
            gateway_key=get("SOC_GATEWAY_KEY", cls.gateway_key),
            gateway_model=get("SOC_GATEWAY_MODEL", cls.gateway_model),
            daily_limit=get("SOC_DAILY_LIMIT", cls.daily_limit, int),
            timezone=get("SOC_TIMEZONE", cls.timezone),
            token_budget=get("SOC_TOKEN_BUDGET", cls.token_budget, int),
            grounding_budget=get("SOC_GROUNDING_BUDGET", cls.grounding_budget, int),
            top_k=get("SOC_TOPK", cls.top_k, int),
            min_score=get("SOC_MIN_SCORE", cls.min_score, float),
            relevance_threshold=get(
                "SOC_RELEVANCE_THRESHOLD", cls.relevance_threshold, float
            ),
            snapshot_interval_s=get(
                "SOC_SNAPSHOT_INTERVAL", cls.snapshot_interval_s, int
            ),
            snapshot_every_events=get(
                "SOC_SNAPSHOT_EVERY_EVENTS", cls.snapshot_every_events, int
            ),
            data_dir=get("SOC_DATA_DIR", cls.data_dir),
            fsync=get("SOC_FSYNC", cls.fsync, bool),
            pattern_file=get("SOC_PATTERN_FILE", cls.pattern_file),
            template_file=get("SOC_TEMPLATE_FILE", cls.template_file),
            stopword_file=get("SOC_STOPWORD_FILE", cls.stopword_file),
            bootstrap_admin=get("SOC_BOOTSTRAP_ADMIN", cls.bootstrap_admin),
        )
