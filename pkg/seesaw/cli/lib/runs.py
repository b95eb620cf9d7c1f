"""Resolve where a run reads its data and writes its outputs, and load the data."""
from pathlib import Path

import numpy as np
from django.conf import settings

from seesaw.training.lib import Batches, load_cifar, load_image_folder

from .errors import ConfigError
from .run_config import RunConfig


def data_dir(config: RunConfig) -> Path:
    if config.data.dir is not None:
        return config.data.dir
    if config.data.kind == "folder":
        return settings.DATA_DIR / "imagenet"
    if settings.CIFAR_DIR:
        return Path(settings.CIFAR_DIR)
    return settings.DATA_DIR / "cifar"


def output_dir(config: RunConfig) -> Path:
    if config.output.dir is not None:
        return config.output.dir
    return settings.RUNS_DIR / f"{config.model.arch}-{config.model.variant}"


def load_train_data(config: RunConfig) -> tuple[Batches, Batches]:
    """The training and evaluation splits; evaluation uses the training statistics."""
    directory = data_dir(config)
    if config.data.kind == "folder":
        if config.data.limit or config.data.test_limit:
            raise ConfigError("[data] limit and test_limit apply to CIFAR data only.")
        train = load_image_folder(directory, "train")
        return train, load_image_folder(directory, "val")
    train = load_cifar(directory, "train", config.data.variant, config.data.limit)
    test = load_cifar(directory, "test", config.data.variant, config.data.test_limit)
    return train, test.with_stats(train.mean, train.std)


def load_eval_data(
    config: RunConfig,
    directory: Path | None = None,
    mean: np.ndarray | None = None,
    std: np.ndarray | None = None,
) -> Batches:
    """The evaluation split; CIFAR data is normalized with `mean` and `std` if given."""
    directory = directory or data_dir(config)
    if config.data.kind == "folder":
        return load_image_folder(directory, "val")
    dataset = load_cifar(directory, "test", config.data.variant, config.data.test_limit)
    if mean is not None and std is not None:
        dataset = dataset.with_stats(mean, std)
    return dataset
