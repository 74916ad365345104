"""Flat ``key = value`` run configuration.

Keys carry a prefix naming the dataclass they set: ``train.``, ``model.``
or ``synth.``, plus ``data.source``, ``data.target`` and
``data.out_dir``. Unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .errors import ConfigError
from .model import ModelConfig
from .synth import SynthConfig
from .train import TrainConfig

SECTIONS = {"train": TrainConfig, "model": ModelConfig, "synth": SynthConfig}
# filled in from the data, not configurable
DERIVED = {"model.vocab_size", "model.n_tags"}
DATA_KEYS = ("data.source", "data.target", "data.out_dir")


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    data: dict = field(default_factory=dict)


def known_keys():
    keys = [f"{sec}.{f.name}" for sec, cls in SECTIONS.items() for f in dataclasses.fields(cls)]
    return [k for k in keys if k not in DERIVED] + list(DATA_KEYS)


def _convert(key, raw, default):
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(p.strip() for p in raw.split(",") if p.strip())
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None


def parse_config_text(text: str) -> dict[str, str]:
    """Raw ``key -> value`` strings; ``#`` starts a comment."""
    values = {}
    known = set(known_keys())
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {line_no}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"config line {line_no}: unknown key {key!r}")
        values[key] = value
    return values


def build_config(values: dict[str, str]) -> RunConfig:
    known = set(known_keys())
    grouped = {sec: {} for sec in SECTIONS}
    data = {}
    for key, raw in values.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r}")
        sec, name = key.split(".", 1)
        if sec == "data":
            data[key] = raw
            continue
        default = getattr(SECTIONS[sec](), name)
        grouped[sec][name] = _convert(key, raw, default)
    return RunConfig(
        train=TrainConfig(**grouped["train"]),
        model=ModelConfig(**grouped["model"]),
        synth=SynthConfig(**grouped["synth"]),
        data=data,
    )


def load_config(path=None, overrides=None) -> RunConfig:
    """Read ``path`` (optional) and apply ``overrides``; later values win."""
    values = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as f:
                values.update(parse_config_text(f.read()))
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
    for key, value in (overrides or {}).items():
        if key not in set(known_keys()):
            raise ConfigError(f"unknown key {key!r}")
        values[key] = str(value)
    return build_config(values)


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(value)
    return str(value)


def format_config(cfg: RunConfig) -> str:
    lines = []
    for sec in SECTIONS:
        obj = getattr(cfg, sec)
        for f in dataclasses.fields(obj):
            key = f"{sec}.{f.name}"
            if key not in DERIVED:
                lines.append(f"{key} = {_fmt(getattr(obj, f.name))}")
    for key in DATA_KEYS:
        if key in cfg.data:
            lines.append(f"{key} = {cfg.data[key]}")
    return "\n".join(lines) + "\n"
