"""
ImageNet-style folders of pre-decoded images.

The layout is `<root>/<split>/<class name>/<image>.npy`, each file holding
an (h, w, 3) uint8 array. Class ids follow the sorted class directory
names. Training views use an Inception-style random resized crop with a
horizontal flip; evaluation resizes the shorter side to 256 and takes the
central 224 x 224 window.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import normalize
from .errors import DatasetFormatError

logger = logging.getLogger(__name__)

CROP_SIZE = 224
RESIZE_SIZE = 256
SCALE_RANGE = (0.08, 1.0)
ASPECT_RANGE = (3 / 4, 4 / 3)
CROP_ATTEMPTS = 10

IMAGENET_MEAN = np.array([0.485, 0.456, 0.406])
IMAGENET_STD = np.array([0.229, 0.224, 0.225])


def resize(image: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize of a (c, h, w) array, pixel centers aligned."""
    _, h, w = image.shape

    def axis(size_in: int, size_out: int):
        coords = (np.arange(size_out) + 0.5) * size_in / size_out - 0.5
        coords = np.clip(coords, 0, size_in - 1)
        low = np.floor(coords).astype(np.int64)
        high = np.minimum(low + 1, size_in - 1)
        return low, high, (coords - low).astype(np.float32)

    y0, y1, fy = axis(h, height)
    x0, x1, fx = axis(w, width)
    data = image.astype(np.float32)
    top = data[:, y0][:, :, x0] * (1 - fx) + data[:, y0][:, :, x1] * fx
    bottom = data[:, y1][:, :, x0] * (1 - fx) + data[:, y1][:, :, x1] * fx
    out = top * (1 - fy)[:, None] + bottom * fy[:, None]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def random_resized_crop(
    image: np.ndarray, rng: np.random.Generator, size: int = CROP_SIZE
) -> np.ndarray:
    """
    A random window covering 8%-100% of the area with aspect ratio in
    [3/4, 4/3], resized to `size` x `size`. Falls back to the central
    square after CROP_ATTEMPTS misses.
    """
    _, h, w = image.shape
    area = h * w
    log_low, log_high = math.log(ASPECT_RANGE[0]), math.log(ASPECT_RANGE[1])
    for _ in range(CROP_ATTEMPTS):
        target = area * rng.uniform(*SCALE_RANGE)
        aspect = math.exp(rng.uniform(log_low, log_high))
        cw = int(round(math.sqrt(target * aspect)))
        ch = int(round(math.sqrt(target / aspect)))
        if 0 < cw <= w and 0 < ch <= h:
            top = int(rng.integers(0, h - ch + 1))
            left = int(rng.integers(0, w - cw + 1))
            return resize(image[:, top : top + ch, left : left + cw], size, size)
    side = min(h, w)
    top, left = (h - side) // 2, (w - side) // 2
    return resize(image[:, top : top + side, left : left + side], size, size)


def center_crop(
    image: np.ndarray, resize_to: int = RESIZE_SIZE, size: int = CROP_SIZE
) -> np.ndarray:
    """Resize the shorter side to `resize_to`, then cut the central window."""
    _, h, w = image.shape
    scale = resize_to / min(h, w)
    height, width = max(size, round(h * scale)), max(size, round(w * scale))
    resized = resize(image, height, width)
    top, left = (height - size) // 2, (width - size) // 2
    return resized[:, top : top + size, left : left + size]


@dataclass(frozen=True)
class ImageFolder:
    paths: list[Path]
    labels: np.ndarray
    classes: list[str]
    split: str
    mean: np.ndarray = field(default_factory=IMAGENET_MEAN.copy)
    std: np.ndarray = field(default_factory=IMAGENET_STD.copy)

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def __len__(self) -> int:
        return len(self.paths)

    def read(self, index: int) -> np.ndarray:
        path = self.paths[index]
        image = np.load(path)
        if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
            raise DatasetFormatError(f"{path} is not an (h, w, 3) uint8 image.")
        return np.ascontiguousarray(image.transpose(2, 0, 1))

    def batch(
        self,
        indices: np.ndarray,
        rng: np.random.Generator | None = None,
        flip: bool = True,
    ) -> tuple[np.ndarray, np.ndarray]:
        views = []
        for index in indices:
            image = self.read(int(index))
            if rng is None:
                views.append(center_crop(image))
                continue
            view = random_resized_crop(image, rng)
            if flip and rng.random() < 0.5:
                view = view[:, :, ::-1]
            views.append(view)
        return normalize(np.stack(views), self.mean, self.std), self.labels[indices]


def load_image_folder(root: str | Path, split: str) -> ImageFolder:
    directory = Path(root) / split
    if not directory.is_dir():
        raise DatasetFormatError(f"{directory} is not a directory.")
    classes = sorted(p.name for p in directory.iterdir() if p.is_dir())
    if not classes:
        raise DatasetFormatError(f"{directory} has no class directories.")
    paths, labels = [], []
    for label, name in enumerate(classes):
        for path in sorted((directory / name).glob("*.npy")):
            paths.append(path)
            labels.append(label)
    logger.info(
        "found %d images in %d classes under %s", len(paths), len(classes), directory
    )
    return ImageFolder(
        paths=paths,
        labels=np.array(labels, dtype=np.int64),
        classes=classes,
        split=split,
    )
