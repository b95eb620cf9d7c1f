"""
Run configuration files.

A run is described by an INI file with the sections [model], [train],
[data] and [output]. Every section is validated by a schema that rejects
unknown keys. Sequence values are written comma separated (`ratio = 1,2`);
a key left out, or left empty, takes its default.

    [model]
    arch = seesaw-shuffle
    variant = 0.5D

    [train]
    schedule = cifar_step
    total_epochs = 30
"""
from __future__ import annotations

import configparser
import io
import typing as t
from pathlib import Path

from pydantic import ValidationError, validator
from pydantic.fields import SHAPE_SINGLETON

from seesaw.lib.base_schema import BaseSchema
from seesaw.nn.lib import (
    DEFAULT_RATIO,
    EVEN_RATIO,
    Arch,
    InputLayout,
    ModelSpec,
    SeesawError,
    make_model_spec,
)
from seesaw.training.lib import RECIPES, TrainConfig, Variant

from .errors import ConfigError

CONFIG_NAME = "config.ini"

DataKind: t.TypeAlias = t.Literal["cifar", "folder"]


class ModelSection(BaseSchema):
    arch: Arch = "seesaw-shuffle"
    variant: str = "0.5D"
    width: float = 1.0
    expansion: int | None = None
    ratio: tuple[int, ...] | None = None
    """None picks the architecture's own grouping."""

    share_width: int | None = None
    permute: bool = True
    layout: InputLayout = "cifar_32"
    seed: int = 0

    def model_spec(self, num_classes: int) -> ModelSpec:
        ratio = self.ratio or (EVEN_RATIO if self.arch == "igcv3" else DEFAULT_RATIO)
        return make_model_spec(
            self.arch,
            self.variant,
            num_classes=num_classes,
            width_multiplier=self.width,
            input_layout=self.layout,
            expansion=self.expansion,
            ratio=ratio,
            share_width=self.share_width,
            permute=self.permute,
        )

    @validator("share_width")
    def _share_width(cls, value: int | None) -> int | None:
        if value is not None and value < 1:
            raise ValueError("must be >= 1")
        return value


class DataSection(BaseSchema):
    kind: DataKind = "cifar"
    dir: Path | None = None
    """Dataset root; defaults to SEESAW_CIFAR_DIR or DATA_DIR/cifar."""

    variant: Variant | None = None
    limit: int | None = None
    test_limit: int | None = None

    @validator("limit", "test_limit")
    def _limit(cls, value: int | None) -> int | None:
        if value is not None and value < 1:
            raise ValueError("must be >= 1")
        return value


class OutputSection(BaseSchema):
    dir: Path | None = None
    """Where checkpoints and metrics go; defaults to RUNS_DIR/<arch>-<variant>."""


class RunConfig(BaseSchema):
    model: ModelSection = ModelSection()
    train: TrainConfig = TrainConfig()
    data: DataSection = DataSection()
    output: OutputSection = OutputSection()

    def to_ini(self) -> str:
        parser = configparser.ConfigParser()
        for section in SECTIONS:
            values = getattr(self, section).dict()
            parser[section] = {
                key: _format(value)
                for key, value in values.items()
                if value is not None
            }
        buffer = io.StringIO()
        parser.write(buffer)
        return buffer.getvalue()

    def write(self, directory: Path) -> Path:
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / CONFIG_NAME
        path.write_text(self.to_ini())
        return path


SECTIONS: dict[str, type[BaseSchema]] = {
    "model": ModelSection,
    "train": TrainConfig,
    "data": DataSection,
    "output": OutputSection,
}


def _format(value: t.Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    return str(value)


def _coerce(schema: type[BaseSchema], section: str, key: str, raw: str) -> t.Any:
    field = schema.__fields__.get(key)
    if field is None:
        raise ConfigError(f"Unknown key {key!r} in [{section}].")
    raw = raw.strip()
    if raw == "":
        return None
    if field.shape != SHAPE_SINGLETON:
        return [part.strip() for part in raw.split(",") if part.strip()]
    return raw


def _build(
    section: str, schema: type[BaseSchema], values: dict[str, t.Any]
) -> BaseSchema:
    values = {key: value for key, value in values.items() if value is not None}
    try:
        if schema is TrainConfig:
            default = TrainConfig.__fields__["schedule"].default
            schedule = values.get("schedule", default)
            return TrainConfig(**{**RECIPES.get(schedule, {}), **values})
        return schema(**values)
    except ValidationError as e:
        keys = ", ".join(str(error["loc"][0]) for error in e.errors())
        raise ConfigError(f"Invalid value for {keys} in [{section}]:\n{e}") from e


def parse_run_config(
    text: str, overrides: t.Mapping[str, t.Mapping[str, t.Any]] | None = None
) -> RunConfig:
    """
    Parse an INI run configuration. `overrides` maps section to key to an
    already typed value and wins over the file; None values are ignored.
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # type: ignore
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"Cannot parse the run configuration: {e}") from e
    overrides = overrides or {}
    for name in [*parser.sections(), *overrides]:
        if name not in SECTIONS:
            raise ConfigError(f"Unknown section [{name}].")
    sections = {}
    for name, schema in SECTIONS.items():
        values = {}
        if parser.has_section(name):
            for key, raw in parser[name].items():
                values[key] = _coerce(schema, name, key, raw)
        for key, value in overrides.get(name, {}).items():
            if key not in schema.__fields__:
                raise ConfigError(f"Unknown key {key!r} in [{name}].")
            if value is not None:
                values[key] = value
        sections[name] = _build(name, schema, values)
    return RunConfig(**sections)


def read_run_config(
    path: Path | str, overrides: t.Mapping[str, t.Mapping[str, t.Any]] | None = None
) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"No run configuration at {path}.")
    return parse_run_config(path.read_text(), overrides)


def model_spec_for(config: RunConfig, num_classes: int) -> ModelSpec:
    try:
        return config.model.model_spec(num_classes)
    except SeesawError as e:
        raise ConfigError(f"Invalid [model] section: {e}") from e
