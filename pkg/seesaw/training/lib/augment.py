"""Pad-and-crop plus horizontal flip, then per-channel normalization."""
from __future__ import annotations

import numpy as np

PAD = 4


def normalize(images: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    """uint8 (..., 3, h, w) images to float32 (x / 255 - mean) / std per channel."""
    mean = np.asarray(mean, dtype=np.float32)[:, None, None]
    std = np.asarray(std, dtype=np.float32)[:, None, None]
    return ((images.astype(np.float32) / 255.0) - mean) / std


def crop_and_flip(image: np.ndarray, offset: tuple[int, int], flip: bool) -> np.ndarray:
    """
    Zero-pad `image` (c, h, w) by PAD on each side, take the h x w window
    whose top-left corner is `offset` in the padded image, and mirror it
    left-right if `flip`. Offset (PAD, PAD) without flip is the identity.
    """
    _, h, w = image.shape
    padded = np.pad(image, ((0, 0), (PAD, PAD), (PAD, PAD)))
    dy, dx = offset
    if not (0 <= dy <= 2 * PAD and 0 <= dx <= 2 * PAD):
        raise ValueError(f"Crop offset {offset} is outside the padding.")
    crop = padded[:, dy : dy + h, dx : dx + w]
    return crop[:, :, ::-1] if flip else crop


def draw_augmentation(
    rng: np.random.Generator, flip: bool = True
) -> tuple[tuple[int, int], bool]:
    dy, dx = rng.integers(0, 2 * PAD + 1, size=2)
    mirrored = bool(rng.random() < 0.5) if flip else False
    return (int(dy), int(dx)), mirrored


def augment(
    image: np.ndarray,
    rng: np.random.Generator,
    mean: np.ndarray,
    std: np.ndarray,
    flip: bool = True,
) -> np.ndarray:
    """One training view of a uint8 (3, 32, 32) image, normalized."""
    offset, mirrored = draw_augmentation(rng, flip)
    return normalize(crop_and_flip(image, offset, mirrored), mean, std)


def augment_batch(
    images: np.ndarray,
    rng: np.random.Generator,
    mean: np.ndarray,
    std: np.ndarray,
    flip: bool = True,
) -> np.ndarray:
    """`augment` applied in sample order, so draws depend only on `rng`."""
    views = [crop_and_flip(image, *draw_augmentation(rng, flip)) for image in images]
    return normalize(np.stack(views), mean, std)
