"""Application configuration: one JSON file of flat dotted keys, mirrored by CLI flags.

Precedence is defaults < file < flags. Relative paths in the file resolve
against the file's directory; flag paths resolve against the working directory.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .model import ModelConfig
from .training import TrainConfig

ENV_CONFIG = "BNQA_CONFIG"

DEFAULTS: dict[str, Any] = {
    "paths.corpus_dir": "corpus",
    "paths.paragraphs_file": "build/paragraphs.json",
    "paths.dataset_file": "dataset.json",
    "paths.train_file": "",
    "paths.eval_file": "",
    "paths.vocab_file": "build/vocab.txt",
    "paths.checkpoint_dir": "build/checkpoints",
    "paths.report_file": "build/report.json",
    "vocab.max_size": 8000,
    "vocab.min_freq": 1,
    "tokenize.max_len": 128,
    "tokenize.doc_stride": 64,
    "model.num_layers": 2,
    "model.hidden_size": 64,
    "model.num_heads": 4,
    "model.ff_size": 256,
    "model.max_positions": 128,
    "model.dropout_rate": 0.1,
    "train.learning_rate": 2e-5,
    "train.batch_size": 16,
    "train.epochs": 3,
    "train.dropout_rate": 0.1,
    "train.weight_decay": 0.01,
    "train.beta1": 0.9,
    "train.beta2": 0.999,
    "train.eps": 1e-8,
    "train.grad_clip_norm": 1.0,
    "train.seed": 7,
    "train.keep_checkpoints": 1,
    "train.log_every": 0,
    "split.eval_fraction": 0.2,
    "split.seed": 13,
    "decode.k": 1,
    "decode.max_answer_tokens": 30,
    "service.host": "127.0.0.1",
    "service.port": 8080,
    "service.context_cap": 10_000,
    "service.cors_origins": ["*"],
}

PATH_KEYS = frozenset(k for k in DEFAULTS if k.startswith("paths."))


class ConfigError(ValueError):
    pass


def _coerce(key: str, value: Any) -> Any:
    """Check a supplied value against the default's type, allowing int -> float."""
    default = DEFAULTS[key]
    if isinstance(default, bool):
        expected = bool
    elif isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        expected = float
    elif isinstance(default, int):
        expected = int
    elif isinstance(default, list):
        expected = list
    else:
        expected = str
    if not isinstance(value, expected) or isinstance(value, bool) != isinstance(default, bool):
        raise ConfigError(f"config key {key!r} expects {expected.__name__}, got {value!r}")
    return value


def _resolve(base: Path, value: str) -> str:
    if not value:
        return value
    path = Path(value)
    return str(path if path.is_absolute() else (base / path))


@dataclass
class AppConfig:
    values: dict[str, Any] = field(default_factory=dict)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def path(self, key: str) -> Path:
        return Path(self.values[f"paths.{key}"])

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(
            num_layers=self["model.num_layers"],
            hidden_size=self["model.hidden_size"],
            num_heads=self["model.num_heads"],
            ff_size=self["model.ff_size"],
            vocab_size=vocab_size,
            max_positions=self["model.max_positions"],
            dropout_rate=self["model.dropout_rate"],
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self["train.learning_rate"],
            batch_size=self["train.batch_size"],
            epochs=self["train.epochs"],
            dropout_rate=self["train.dropout_rate"],
            weight_decay=self["train.weight_decay"],
            beta1=self["train.beta1"],
            beta2=self["train.beta2"],
            eps=self["train.eps"],
            grad_clip_norm=self["train.grad_clip_norm"],
            seed=self["train.seed"],
        )


def load_config(
    config_path: str | Path | None = None, overrides: dict[str, Any] | None = None
) -> AppConfig:
    """Merge defaults, the optional JSON file, and explicit overrides."""
    values = dict(DEFAULTS)
    if config_path is None:
        config_path = os.environ.get(ENV_CONFIG) or None
    if config_path:
        path = Path(config_path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a JSON object of dotted keys")
        base = path.resolve().parent
        for key, value in raw.items():
            if key not in DEFAULTS:
                raise ConfigError(f"{path}: unknown config key {key!r}")
            value = _coerce(key, value)
            if key in PATH_KEYS:
                value = _resolve(base, value)
            values[key] = value
    for key, value in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = _coerce(key, value)
    return AppConfig(values)
