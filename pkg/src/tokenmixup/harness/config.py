"""Run configuration: dataclass defaults, flat ``key = value`` files, CLI overrides."""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping, Optional

from ..errors import ConfigError
from ..transformer import ModelConfig

MODES = ("baseline", "htm", "vtm", "htm_vtm", "random_sample", "random_token")


@dataclass(frozen=True)
class DatasetConfig:
    classes: int = 4
    samples_per_class: int = 250
    image_size: int = 16
    noise_std: float = 0.6


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    seed: int = 0
    epochs: int = 30
    batch_size: int = 32
    lr: float = 0.01
    momentum: float = 0.9
    mode: str = "htm"
    out_dir: str = "runs/default"
    random_k: float = 5.0
    timing: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        if self.dataset.classes < 2:
            raise ConfigError("the synthetic task needs at least 2 classes")
        if self.dataset.classes != self.model.num_classes:
            raise ConfigError(f"dataset has {self.dataset.classes} classes, model {self.model.num_classes}")
        if self.dataset.image_size != self.model.image_size:
            raise ConfigError("dataset and model disagree on image_size")

    @property
    def effective_model(self) -> ModelConfig:
        """Model config with the hook layers the mode actually uses."""
        m = self.model
        uses_htm = self.mode in ("htm", "htm_vtm", "random_sample", "random_token")
        uses_vtm = self.mode in ("vtm", "htm_vtm")
        return dataclasses.replace(
            m,
            htm_layer=m.htm_layer if uses_htm else None,
            vtm_layer=m.vtm_layer if uses_vtm else None,
        )

    @property
    def htm_variant(self) -> str:
        return self.mode if self.mode in ("random_sample", "random_token") else "htm"


_SECTIONS = {"model": ModelConfig, "dataset": DatasetConfig}
# shorthand keys accepted at top level
_ALIASES = {
    "classes": ("dataset", "classes"), "samples_per_class": ("dataset", "samples_per_class"),
    "noise_std": ("dataset", "noise_std"), "out": ("run", "out_dir"),
}


def _target(key: str) -> tuple[str, str]:
    if key in _ALIASES:
        return _ALIASES[key]
    if "." in key:
        section, name = key.split(".", 1)
        return section, name
    if key in {f.name for f in fields(RunConfig)}:
        return "run", key
    if key in ModelConfig.field_names():
        return "model", key
    if key in {f.name for f in fields(DatasetConfig)}:
        return "dataset", key
    raise ConfigError(f"unknown config key {key!r}")


def _convert(cls, name: str, raw: Any):
    hints = typing.get_type_hints(cls)
    if name not in hints:
        raise ConfigError(f"{cls.__name__} has no field {name!r}")
    if not isinstance(raw, str):
        return raw
    kind = hints[name]
    text = raw.strip()
    optional = typing.get_origin(kind) is typing.Union and type(None) in typing.get_args(kind)
    if optional:
        if text.lower() in ("none", "null", ""):
            return None
        kind = next(a for a in typing.get_args(kind) if a is not type(None))
    try:
        if kind is bool:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value {raw!r} for {name}") from exc


def build_config(values: Mapping[str, Any], base: Optional[RunConfig] = None) -> RunConfig:
    base = base or RunConfig()
    run_kw: dict[str, Any] = {}
    nested: dict[str, dict[str, Any]] = {"model": {}, "dataset": {}}
    for key, raw in values.items():
        section, name = _target(key)
        cls = RunConfig if section == "run" else _SECTIONS.get(section)
        if cls is None:
            raise ConfigError(f"unknown config section {section!r}")
        value = _convert(cls, name, raw)
        (run_kw if section == "run" else nested[section])[name] = value
    # keep model/dataset class count and image size in step unless set explicitly
    if "num_classes" in nested["model"] and "classes" not in nested["dataset"]:
        nested["dataset"]["classes"] = nested["model"]["num_classes"]
    if "classes" in nested["dataset"] and "num_classes" not in nested["model"]:
        nested["model"]["num_classes"] = nested["dataset"]["classes"]
    if "image_size" in nested["model"] and "image_size" not in nested["dataset"]:
        nested["dataset"]["image_size"] = nested["model"]["image_size"]
    try:
        model = dataclasses.replace(base.model, **nested["model"])
        dataset = dataclasses.replace(base.dataset, **nested["dataset"])
        return dataclasses.replace(base, model=model, dataset=dataset, **run_kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def load_config_file(path: str | Path, base: Optional[RunConfig] = None) -> RunConfig:
    text = Path(path).read_text(encoding="utf-8")
    return build_config(parse_config_text(text), base)


def dump_config(cfg: RunConfig) -> str:
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in fields(cfg) if f.name not in _SECTIONS]
    lines += [f"model.{f.name} = {getattr(cfg.model, f.name)}" for f in fields(cfg.model)]
    lines += [f"dataset.{f.name} = {getattr(cfg.dataset, f.name)}" for f in fields(cfg.dataset)]
    return "\n".join(lines) + "\n"
