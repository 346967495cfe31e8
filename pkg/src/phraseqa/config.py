"""Runtime settings with layered overrides.

Precedence, lowest to highest: built-in defaults, JSON config file,
PHRASEQA_<FIELD> environment variables, explicit keyword overrides.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

ENV_PREFIX = "PHRASEQA_"


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class Settings:
    # encoder
    dense_dim: int = 256
    sparse_dim: int = 1 << 20
    context_weight: float = 0.25
    seed: int = 0
    # corpus / indexing
    max_phrase_len: int = 5
    num_centroids: int = 1024
    kmeans_iters: int = 25
    corpus_on_error: str = "abort"  # or "skip"
    # query-time pipeline
    nprobe: int = 64
    rerank_depth: int = 100
    sparse_weight: float = 1.0  # λ
    recency_weight: float = 0.0
    impact_weight: float = 0.0
    external_weight: float = 0.0
    recency_tau_days: float = 365.0
    answers_k: int = 10
    # entity search
    entity_top_k: int = 10
    bm25_k1: float = 1.2
    bm25_b: float = 0.75
    # service
    host: str = "127.0.0.1"
    port: int = 9030

    def validate(self) -> "Settings":
        if self.dense_dim < 8:
            raise ConfigError(f"dense_dim must be >= 8, got {self.dense_dim}")
        if self.sparse_dim < 1:
            raise ConfigError(f"sparse_dim must be >= 1, got {self.sparse_dim}")
        if self.max_phrase_len < 1:
            raise ConfigError(f"max_phrase_len must be >= 1, got {self.max_phrase_len}")
        if self.num_centroids < 1:
            raise ConfigError(f"num_centroids must be >= 1, got {self.num_centroids}")
        if self.kmeans_iters < 1:
            raise ConfigError(f"kmeans_iters must be >= 1, got {self.kmeans_iters}")
        if self.corpus_on_error not in ("abort", "skip"):
            raise ConfigError(f"corpus_on_error must be 'abort' or 'skip', got {self.corpus_on_error!r}")
        if self.nprobe < 1:
            raise ConfigError(f"nprobe must be >= 1, got {self.nprobe}")
        if self.rerank_depth < 1:
            raise ConfigError(f"rerank_depth must be >= 1, got {self.rerank_depth}")
        if self.sparse_weight < 0:
            raise ConfigError(f"sparse_weight must be non-negative, got {self.sparse_weight}")
        if self.recency_tau_days <= 0:
            raise ConfigError(f"recency_tau_days must be positive, got {self.recency_tau_days}")
        if self.answers_k < 1:
            raise ConfigError(f"answers_k must be >= 1, got {self.answers_k}")
        if not 1 <= self.port <= 65535:
            raise ConfigError(f"port must be in [1, 65535], got {self.port}")
        if self.bm25_k1 < 0:
            raise ConfigError(f"bm25_k1 must be non-negative, got {self.bm25_k1}")
        if not 0 <= self.bm25_b <= 1:
            raise ConfigError(f"bm25_b must be in [0, 1], got {self.bm25_b}")
        return self

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def _coerce(name: str, kind: type, raw: Any) -> Any:
    try:
        if kind is bool:
            if isinstance(raw, bool):
                return raw
            text = str(raw).strip().lower()
            if text in ("1", "true", "yes", "on"):
                return True
            if text in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return kind(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def load_settings(
    config_path: str | Path | None = None,
    env: Mapping[str, str] | None = None,
    **overrides: Any,
) -> Settings:
    """Resolve Settings from defaults, an optional JSON file, env, and kwargs."""
    env = os.environ if env is None else env
    field_types = {f.name: f.type for f in fields(Settings)}
    types = {
        name: (int if t in ("int", int) else float if t in ("float", float) else str)
        for name, t in field_types.items()
    }
    values: dict[str, Any] = {}

    if config_path is not None:
        try:
            raw = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {config_path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {config_path} is not valid JSON: {exc}")
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {config_path} must hold a JSON object")
        for name, value in raw.items():
            if name not in types:
                raise ConfigError(f"unknown setting in {config_path}: {name!r}")
            values[name] = _coerce(name, types[name], value)

    for name, kind in types.items():
        env_key = ENV_PREFIX + name.upper()
        if env_key in env:
            values[name] = _coerce(env_key, kind, env[env_key])

    for name, value in overrides.items():
        if name not in types:
            raise ConfigError(f"unknown setting override: {name!r}")
        if value is not None:
            values[name] = _coerce(name, types[name], value)

    return Settings(**values).validate()
