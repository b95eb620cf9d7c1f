"""Small models and synthetic CIFAR files shared by the training and CLI tests."""
from pathlib import Path

import numpy as np

from seesaw.nn.lib import ModelSpec, StageSpec
from seesaw.training.lib import FORMATS, Dataset, channel_stats, encode_records


def tiny_spec(num_classes: int = 4, **kwargs) -> ModelSpec:
    """A three-stage seesaw-shuffle network that runs in milliseconds."""
    return ModelSpec(
        arch="seesaw-shuffle",
        stages=[
            StageSpec(kind="seesaw_shuffle", t=1, c=6, n=1, s=1),
            StageSpec(kind="seesaw_shuffle", t=2, c=9, n=2, s=2),
            StageSpec(kind="seesaw_shuffle", t=2, c=12, n=1, s=2),
        ],
        stem_channels=6,
        head_channels=12,
        num_classes=num_classes,
        depth_variant="0.5D",
        input_layout="cifar_32",
        **kwargs,
    )


def color_images(count: int, num_classes: int, seed: int = 0):
    """
    Images whose class is readable from their colour: class k brightens
    channel k % 3 and draws a horizontal band at a class-specific height.
    """
    rng = np.random.default_rng(seed)
    labels = np.arange(count) % num_classes
    images = rng.integers(0, 64, size=(count, 3, 32, 32), dtype=np.uint8)
    for image, label in zip(images, labels):
        image[label % 3] += 128
        row = 4 + 6 * (label // 3)
        image[:, row : row + 3] = 255
    return images, labels.astype(np.int64)


def color_dataset(count: int = 16, num_classes: int = 4, seed: int = 0) -> Dataset:
    images, labels = color_images(count, num_classes, seed)
    mean, std = channel_stats(images)
    return Dataset(
        images=images,
        labels=labels,
        split="train",
        num_classes=num_classes,
        mean=mean,
        std=std,
    )


def write_cifar10(directory: Path, train_count: int = 40, test_count: int = 20):
    """A CIFAR-10 directory with the real file names and synthetic records."""
    directory.mkdir(parents=True, exist_ok=True)
    names = FORMATS["cifar10"].files["train"]
    per_file = train_count // len(names)
    for i, name in enumerate(names):
        images, labels = color_images(per_file, 10, seed=i)
        (directory / name).write_bytes(encode_records(images, labels))
    images, labels = color_images(test_count, 10, seed=99)
    (directory / "test_batch.bin").write_bytes(encode_records(images, labels))
