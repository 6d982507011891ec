"""Run configuration: defaults, ``key = value`` files and overrides."""
from __future__ import annotations

import dataclasses
import datetime as dt
from dataclasses import dataclass, field, fields
from pathlib import Path

from .synth import SynthConfig


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    seed: int = 42
    # grouping
    window_days: int = 28
    tau: float = 0.7
    m_max: int = 32
    train_fraction: float = 0.8
    reviewer_label_threshold: float = 0.5
    group_label_threshold: float = 0.5
    # embeddings
    embed_dim: int = 100
    embed_window: int = 2
    embed_batch: int = 512
    embed_epochs: int = 5
    embed_negatives: int = 5
    embed_min_count: int = 1
    embed_lr: float = 0.05
    embeddings_path: str = ""
    standardize: bool = True
    # spatial
    hinrnn_lr: float = 0.003
    hinrnn_epochs: int = 3000
    hinrnn_graph_hidden: int = 128
    hinrnn_edge_hidden: int = 16
    refine_mode: str = "teacher"
    # temporal
    temporal_lr: float = 1e-4
    temporal_epochs: int = 1000
    temporal_hidden: int = 64
    # gcn
    gcn_lr: float = 1e-5
    gcn_epochs: int = 100
    gcn_hidden: int = 16
    # classification
    fc_lr: float = 1e-3
    fc_epochs: int = 200
    strategy: str = "kmeans"
    gate: float = 0.5
    centroid_theta: float = 1.5
    clip_norm: float = 5.0
    synth: SynthConfig = field(default_factory=SynthConfig)

    def validate(self) -> None:
        from .classify import STRATEGIES

        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {', '.join(STRATEGIES)}, got {self.strategy!r}")
        if self.refine_mode not in ("teacher", "generate"):
            raise ConfigError("refine_mode must be 'teacher' or 'generate'")
        if not -1.0 <= self.tau <= 1.0:
            raise ConfigError("tau must lie in [-1, 1]")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie strictly between 0 and 1")
        if self.m_max < 2:
            raise ConfigError("m_max must be at least 2")
        for name in ("hinrnn_epochs", "temporal_epochs", "gcn_epochs", "fc_epochs", "embed_epochs"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        self.synth.validate()


def valid_keys() -> list[str]:
    own = [f.name for f in fields(PipelineConfig) if f.name != "synth"]
    return own + ["synth." + n for n in SynthConfig.field_names()]


def _convert(raw: str, current, key: str):
    try:
        if isinstance(current, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            parts = [p.strip() for p in raw.replace(",", " ").split()]
            if len(parts) != len(current):
                raise ValueError(f"expected {len(current)} values")
            return tuple(type(c)(p) for c, p in zip(current, parts))
        if isinstance(current, dt.date):
            return dt.date.fromisoformat(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None


def apply(cfg: PipelineConfig, key: str, raw) -> None:
    key = key.strip()
    if key.startswith("synth."):
        target, name = cfg.synth, key[len("synth."):]
    else:
        target, name = cfg, key
    if name == "synth" or name not in {f.name for f in fields(target)}:
        raise ConfigError(f"unknown config key {key!r}; valid keys: {', '.join(valid_keys())}")
    current = getattr(target, name)
    value = raw if not isinstance(raw, str) else _convert(raw.strip(), current, key)
    setattr(target, name, value)


def parse_config(text: str, cfg: PipelineConfig | None = None, source: str = "<config>") -> PipelineConfig:
    cfg = cfg or PipelineConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        try:
            apply(cfg, key, value)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return cfg


def load_config(path) -> PipelineConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), source=str(path))


def format_config(cfg: PipelineConfig) -> str:
    lines = []
    for f in fields(cfg):
        if f.name == "synth":
            continue
        lines.append(f"{f.name} = {_show(getattr(cfg, f.name))}")
    for name in SynthConfig.field_names():
        lines.append(f"synth.{name} = {_show(getattr(cfg.synth, name))}")
    return "\n".join(lines) + "\n"


def _show(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(str(x) for x in v)
    return str(v)


def copy_config(cfg: PipelineConfig) -> PipelineConfig:
    return dataclasses.replace(cfg, synth=dataclasses.replace(cfg.synth))
