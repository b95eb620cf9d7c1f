"""
Training hyper-parameters.

Two recipes come with defaults: `cifar_step` (lr 0.1, divided by 10 at
epochs 200, 300 and 350) and `imagenet_exp` (lr 0.045, multiplied by 0.98
every epoch). `constant` keeps `base_lr` for the whole run.
"""
from __future__ import annotations

import typing as t

from pydantic import validator

from seesaw.lib.base_schema import BaseSchema

Schedule: t.TypeAlias = t.Literal["cifar_step", "imagenet_exp", "constant"]

SCHEDULES: tuple[Schedule, ...] = t.get_args(Schedule)

RECIPES: dict[Schedule, dict[str, t.Any]] = {
    "cifar_step": {
        "base_lr": 0.1,
        "momentum": 0.9,
        "weight_decay": 1e-4,
        "batch_size": 64,
    },
    "imagenet_exp": {
        "base_lr": 0.045,
        "momentum": 0.9,
        "weight_decay": 4e-5,
        "batch_size": 96,
    },
    "constant": {},
}


class TrainConfig(BaseSchema):
    schedule: Schedule = "cifar_step"
    base_lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 64
    total_epochs: int = 400
    milestones: tuple[int, ...] = (200, 300, 350)
    step_factor: float = 0.1
    epoch_decay: float = 0.98
    seed: int = 0
    augment: bool = True
    flip: bool = True
    steps_per_epoch: int | None = None

    @validator("base_lr", "batch_size", "total_epochs")
    def _positive(cls, value):
        if value <= 0:
            raise ValueError("must be > 0")
        return value

    @validator("momentum")
    def _momentum(cls, value: float) -> float:
        if not 0.0 <= value < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        return value

    @validator("weight_decay")
    def _decay(cls, value: float) -> float:
        if value < 0:
            raise ValueError("weight decay must be >= 0")
        return value

    @validator("milestones")
    def _milestones(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        if list(value) != sorted(value):
            raise ValueError("milestones must be increasing")
        return value

    @validator("steps_per_epoch")
    def _steps(cls, value: int | None) -> int | None:
        if value is not None and value < 1:
            raise ValueError("steps_per_epoch must be >= 1")
        return value


def recipe(schedule: Schedule, **overrides: t.Any) -> TrainConfig:
    """A `TrainConfig` with the recipe defaults for `schedule`, then `overrides`."""
    return TrainConfig(**{"schedule": schedule, **RECIPES[schedule], **overrides})
