"""Flat ``key=value`` run configuration.

Blank lines and ``#`` comments are ignored. Every key has a default; an
unknown key is an error.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from .model import EncoderConfig, WordLayerConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text: str) -> Optional[float]:
    return None if text.lower() in ("none", "") else float(text)


# key -> (parser, default)
SCHEMA = {
    "encoder.layers": (int, 2),
    "encoder.hidden": (int, 64),
    "encoder.heads": (int, 4),
    "encoder.ffn": (int, 256),
    "encoder.max_positions": (int, 256),
    "word_layer.kind": (str, "transformer"),
    "word_layer.heads": (int, 8),
    "word_layer.ffn": (int, 256),
    "dropout": (float, 0.1),
    "crf.masked_training": (_bool, False),
    "vocab.min_count": (int, 2),
    "lr": (float, 3e-5),
    "batch_size": (int, 4),
    "epochs": (int, 25),
    "ema.enabled": (_bool, True),
    "ema.lambda": (float, 0.99),
    "grad_clip": (_optional_float, None),
    "seed": (int, 0),
}


def defaults() -> dict:
    return {k: default for k, (_, default) in SCHEMA.items()}


def parse_config(text: str, source: str = "<config>") -> dict:
    values = defaults()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        parser, _ = SCHEMA[key]
        try:
            values[key] = parser(value)
        except ValueError as e:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {e}") from None
    return values


def load_config(path) -> dict:
    return parse_config(Path(path).read_text(encoding="utf-8"), str(path))


def format_config(values: dict) -> str:
    return "".join(f"{k}={'none' if v is None else v}\n" for k, v in values.items())


def encoder_config(values: dict, vocab_size: int) -> EncoderConfig:
    return EncoderConfig(
        num_layers=values["encoder.layers"],
        hidden_dim=values["encoder.hidden"],
        num_heads=values["encoder.heads"],
        ffn_dim=values["encoder.ffn"],
        max_positions=values["encoder.max_positions"],
        vocab_size=vocab_size,
    )


def word_layer_config(values: dict) -> WordLayerConfig:
    return WordLayerConfig(
        kind=values["word_layer.kind"],
        hidden_dim=values["encoder.hidden"],
        num_heads=values["word_layer.heads"],
        ffn_dim=values["word_layer.ffn"],
    )


def train_config(values: dict) -> TrainConfig:
    return TrainConfig(
        learning_rate=values["lr"],
        batch_size=values["batch_size"],
        max_epochs=values["epochs"],
        ema_lambda=values["ema.lambda"],
        ema_enabled=values["ema.enabled"],
        seed=values["seed"],
        grad_clip_norm=values["grad_clip"],
    )
