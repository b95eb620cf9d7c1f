"""
CIFAR binary batches.

CIFAR-10 records are 3073 bytes: one label byte and 3072 pixel bytes laid
out as the red, green and blue 32x32 planes, each row-major. CIFAR-100
records carry a coarse and a fine label byte before the pixels (3074 bytes);
the fine label is used.
"""
from __future__ import annotations

import logging
import typing as t
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .augment import augment_batch, normalize
from .errors import DatasetFormatError

logger = logging.getLogger(__name__)

Split: t.TypeAlias = t.Literal["train", "test"]
Variant: t.TypeAlias = t.Literal["cifar10", "cifar100"]

IMAGE_SHAPE = (3, 32, 32)
PIXEL_BYTES = 3 * 32 * 32


@dataclass(frozen=True)
class CifarFormat:
    label_bytes: int
    num_classes: int
    files: dict[Split, tuple[str, ...]]

    @property
    def record_size(self) -> int:
        return self.label_bytes + PIXEL_BYTES


FORMATS: dict[Variant, CifarFormat] = {
    "cifar10": CifarFormat(
        label_bytes=1,
        num_classes=10,
        files={
            "train": tuple(f"data_batch_{i}.bin" for i in range(1, 6)),
            "test": ("test_batch.bin",),
        },
    ),
    "cifar100": CifarFormat(
        label_bytes=2,
        num_classes=100,
        files={"train": ("train.bin",), "test": ("test.bin",)},
    ),
}


@dataclass(frozen=True)
class Dataset:
    """
    Decoded images (n, 3, 32, 32) as uint8 with integer labels, plus the
    per-channel mean and std (on the [0, 1] pixel scale) used to normalize
    them.
    """

    images: np.ndarray
    labels: np.ndarray
    split: Split
    num_classes: int
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if self.images.shape[1:] != IMAGE_SHAPE:
            raise DatasetFormatError(
                f"Expected 3x32x32 images, got {self.images.shape}."
            )
        if len(self.images) != len(self.labels):
            raise DatasetFormatError("Image and label counts differ.")
        if len(self.labels) and (
            self.labels.min() < 0 or self.labels.max() >= self.num_classes
        ):
            raise DatasetFormatError(f"Labels must lie in [0, {self.num_classes}).")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, count: int) -> Dataset:
        """The first `count` samples, keeping the normalization statistics."""
        return replace(self, images=self.images[:count], labels=self.labels[:count])

    def with_stats(self, mean: np.ndarray, std: np.ndarray) -> Dataset:
        return replace(self, mean=np.asarray(mean), std=np.asarray(std))

    def batch(
        self,
        indices: np.ndarray,
        rng: np.random.Generator | None = None,
        flip: bool = True,
    ) -> tuple[np.ndarray, np.ndarray]:
        """
        Normalized float32 inputs and labels for `indices`. With an `rng`
        the training augmentation is applied; without one, only
        normalization.
        """
        images = self.images[indices]
        if rng is None:
            x = normalize(images, self.mean, self.std)
        else:
            x = augment_batch(images, rng, self.mean, self.std, flip=flip)
        return x, self.labels[indices]


def channel_stats(images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and std of uint8 images, on the [0, 1] scale."""
    pixels = images.astype(np.float64) / 255.0
    mean = pixels.mean(axis=(0, 2, 3))
    std = pixels.std(axis=(0, 2, 3))
    return mean, np.where(std > 0, std, 1.0)


def decode_records(data: bytes, variant: Variant = "cifar10"):
    """Split raw record bytes into (images, labels)."""
    fmt = FORMATS[variant]
    if len(data) % fmt.record_size:
        raise DatasetFormatError(
            f"{len(data)} bytes is not a whole number of "
            f"{fmt.record_size}-byte {variant} records."
        )
    records = np.frombuffer(data, dtype=np.uint8).reshape(-1, fmt.record_size)
    labels = records[:, fmt.label_bytes - 1].astype(np.int64)
    if len(labels) and labels.max() >= fmt.num_classes:
        raise DatasetFormatError(
            f"Label {labels.max()} is out of range for {variant} "
            f"({fmt.num_classes} classes)."
        )
    images = records[:, fmt.label_bytes :].reshape(-1, *IMAGE_SHAPE).copy()
    return images, labels


def encode_records(
    images: np.ndarray, labels: np.ndarray, variant: Variant = "cifar10"
) -> bytes:
    """The inverse of `decode_records`; CIFAR-100 coarse labels are written as 0."""
    fmt = FORMATS[variant]
    records = np.zeros((len(labels), fmt.record_size), dtype=np.uint8)
    records[:, fmt.label_bytes - 1] = labels
    records[:, fmt.label_bytes :] = images.reshape(len(labels), PIXEL_BYTES)
    return records.tobytes()


def detect_variant(directory: Path) -> Variant:
    for variant, fmt in FORMATS.items():
        if any((directory / name).exists() for name in fmt.files["test"]):
            return variant
    raise DatasetFormatError(f"No CIFAR batch files found in {directory}.")


def load_cifar(
    directory: str | Path,
    split: Split,
    variant: Variant | None = None,
    limit: int | None = None,
) -> Dataset:
    """
    Read the `split` batch files from `directory`. Normalization statistics
    are those of the loaded images; evaluation sets should take the
    training set's via `Dataset.with_stats`.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetFormatError(f"{directory} is not a directory.")
    variant = variant or detect_variant(directory)
    fmt = FORMATS[variant]
    images, labels = [], []
    for name in fmt.files[split]:
        path = directory / name
        if not path.exists():
            raise DatasetFormatError(f"Missing CIFAR batch file {path}.")
        batch_images, batch_labels = decode_records(path.read_bytes(), variant)
        images.append(batch_images)
        labels.append(batch_labels)
    all_images = np.concatenate(images)[:limit]
    all_labels = np.concatenate(labels)[:limit]
    mean, std = channel_stats(all_images)
    logger.info(
        "loaded %d %s %s images from %s", len(all_labels), variant, split, directory
    )
    return Dataset(
        images=all_images,
        labels=all_labels,
        split=split,
        num_classes=fmt.num_classes,
        mean=mean,
        std=std,
    )
