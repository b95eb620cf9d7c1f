"""
Forward numeric kernels over dense (n, c, h, w) tensors.

Tensors are plain numpy arrays. Single precision is used for training and
double precision for gradient checks; every kernel preserves its input dtype.
Kernels never modify their inputs.
"""
from __future__ import annotations

import math
import typing as t
from dataclasses import dataclass

import numpy as np

from .errors import GradientModeError, ShapeError
from .partition import ChannelPartition, check_permutation, group_input_indices

Tensor: t.TypeAlias = np.ndarray
"""A dense 4-D array laid out as (batch, channels, rows, cols)."""

Mode: t.TypeAlias = t.Literal["train", "infer"]

BN_EPSILON = 1e-5
BN_MOMENTUM = 0.9


def check_tensor(x: Tensor, name: str = "x") -> Tensor:
    if not isinstance(x, np.ndarray) or x.ndim != 4:
        raise ShapeError(f"{name} must be a 4-D (n, c, h, w) array.")
    if min(x.shape) < 1:
        raise ShapeError(f"{name} has an empty dimension: {x.shape}")
    return x


def _pad_hw(x: Tensor, pad: int) -> Tensor:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _tap(xp: Tensor, ky: int, kx: int, stride: int, ho: int, wo: int) -> Tensor:
    """The strided window of the padded input that kernel tap (ky, kx) sees."""
    return xp[
        :,
        :,
        ky : ky + stride * (ho - 1) + 1 : stride,
        kx : kx + stride * (wo - 1) + 1 : stride,
    ]


def conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


# ---------------------------------------------------------------------
# Convolutions
# ---------------------------------------------------------------------


def check_grouped_weights(
    weights: t.Sequence[np.ndarray],
    pin: ChannelPartition,
    pout: ChannelPartition,
    share_width: int = 0,
):
    if len(pin) != len(pout):
        raise ShapeError(
            f"Input partition has {len(pin)} groups, output partition {len(pout)}."
        )
    if len(weights) != len(pin):
        raise ShapeError(f"Expected {len(pin)} group kernels, got {len(weights)}.")
    for group, weight in enumerate(weights):
        expected = (pout[group], pin[group] + share_width)
        if weight.shape != expected:
            raise ShapeError(
                f"Group {group} kernel has shape {weight.shape}, expected {expected}."
            )


def conv1x1_grouped_forward(
    x: Tensor,
    weights: t.Sequence[np.ndarray],
    pin: ChannelPartition,
    pout: ChannelPartition,
    share_width: int = 0,
) -> Tensor:
    """
    Pointwise convolution with (possibly uneven, possibly overlapping) groups.

    Group g's kernel has shape (pout[g], pin[g] + share_width). Output groups
    are laid out contiguously in partition order. No bias.
    """
    check_tensor(x)
    check_grouped_weights(weights, pin, pout, share_width)
    pin.check_channels(x.shape[1], "input")
    n, _, h, w = x.shape
    out = np.empty((n, pout.total, h, w), dtype=x.dtype)
    for weight, channels, out_slice in zip(
        weights, group_input_indices(pin, share_width), pout.slices()
    ):
        out[:, out_slice] = np.einsum("oi,nihw->nohw", weight, x[:, channels])
    return out


def depthwise_conv3x3_forward(x: Tensor, weights: np.ndarray, stride: int) -> Tensor:
    """Per-channel 3x3 cross-correlation with zero padding 1."""
    check_tensor(x)
    if stride not in (1, 2):
        raise ShapeError(f"Depthwise stride must be 1 or 2, got {stride}.")
    if weights.shape != (x.shape[1], 3, 3):
        raise ShapeError(
            f"Depthwise kernel has shape {weights.shape}, "
            f"expected {(x.shape[1], 3, 3)}."
        )
    n, c, h, w = x.shape
    ho, wo = math.ceil(h / stride), math.ceil(w / stride)
    xp = _pad_hw(x, 1)
    out = np.zeros((n, c, ho, wo), dtype=x.dtype)
    for ky in range(3):
        for kx in range(3):
            out += weights[None, :, ky, kx, None, None] * _tap(
                xp, ky, kx, stride, ho, wo
            )
    return out


def check_dense_weights(x: Tensor, weights: np.ndarray, stride: int, pad: int):
    if weights.ndim != 4 or weights.shape[1] != x.shape[1]:
        raise ShapeError(
            f"Dense kernel {weights.shape} does not fit {x.shape[1]} input channels."
        )
    if stride < 1 or pad < 0:
        raise ShapeError(f"Invalid stride {stride} / pad {pad}.")
    kh, kw = weights.shape[2:]
    if kh > x.shape[2] + 2 * pad or kw > x.shape[3] + 2 * pad:
        raise ShapeError(
            f"Kernel {kh}x{kw} is larger than the padded input "
            f"{x.shape[2] + 2 * pad}x{x.shape[3] + 2 * pad}."
        )


def conv2d_dense_forward(
    x: Tensor, weights: np.ndarray, stride: int = 1, pad: int = 0
) -> Tensor:
    """Dense cross-correlation; `weights` is (Cout, Cin, kh, kw). No bias."""
    check_tensor(x)
    check_dense_weights(x, weights, stride, pad)
    n = x.shape[0]
    cout, _, kh, kw = weights.shape
    ho = conv_output_size(x.shape[2], kh, stride, pad)
    wo = conv_output_size(x.shape[3], kw, stride, pad)
    xp = _pad_hw(x, pad)
    out = np.zeros((n, cout, ho, wo), dtype=x.dtype)
    for ky in range(kh):
        for kx in range(kw):
            out += np.einsum(
                "oc,nchw->nohw", weights[:, :, ky, kx], _tap(xp, ky, kx, stride, ho, wo)
            )
    return out


# ---------------------------------------------------------------------
# Pointwise & reductions
# ---------------------------------------------------------------------


def relu6(x: Tensor) -> Tensor:
    return np.clip(x, 0, 6).astype(x.dtype, copy=False)


@dataclass
class BatchNormState:
    """Running statistics of a batch norm layer."""

    mean: np.ndarray
    var: np.ndarray
    momentum: float = BN_MOMENTUM
    eps: float = BN_EPSILON

    @classmethod
    def fresh(cls, channels: int, dtype=np.float32) -> BatchNormState:
        return cls(
            mean=np.zeros(channels, dtype=dtype), var=np.ones(channels, dtype=dtype)
        )


@dataclass(frozen=True)
class BatchStatistics:
    mean: np.ndarray
    var: np.ndarray
    count: int


def batch_statistics(x: Tensor) -> BatchStatistics:
    """Per-channel mean and biased variance over (n, h, w)."""
    if x.size == 0:
        raise ShapeError("Batch norm in train mode needs a non-empty batch.")
    mean = x.mean(axis=(0, 2, 3))
    var = x.var(axis=(0, 2, 3))
    return BatchStatistics(mean=mean, var=var, count=x.size // x.shape[1])


def batchnorm_forward(
    x: Tensor,
    gamma: np.ndarray,
    beta: np.ndarray,
    state: BatchNormState,
    mode: Mode,
) -> Tensor:
    """
    Normalize each channel, then scale by `gamma` and shift by `beta`.

    Train mode normalizes with the batch statistics and folds them into
    `state` (running = momentum * running + (1 - momentum) * batch, with the
    unbiased variance); infer mode normalizes with `state`.
    """
    check_tensor(x)
    if gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeError("gamma and beta must have one entry per channel.")
    if mode == "train":
        stats = batch_statistics(x)
        mean, var = stats.mean, stats.var
        unbiased = var * stats.count / max(stats.count - 1, 1)
        keep = state.momentum
        state.mean = (keep * state.mean + (1 - keep) * mean).astype(state.mean.dtype)
        state.var = (keep * state.var + (1 - keep) * unbiased).astype(state.var.dtype)
    elif mode == "infer":
        mean, var = state.mean, state.var
    else:
        raise GradientModeError(f"Unknown batch norm mode: {mode}")
    inv_std = 1.0 / np.sqrt(var + state.eps)
    scale = (gamma * inv_std).astype(x.dtype)
    shift = (beta - mean * gamma * inv_std).astype(x.dtype)
    return x * scale[None, :, None, None] + shift[None, :, None, None]


def global_avgpool(x: Tensor) -> Tensor:
    check_tensor(x)
    return x.mean(axis=(2, 3), keepdims=True)


def channel_permute(x: Tensor, perm: t.Sequence[int] | np.ndarray) -> Tensor:
    """Output channel i is input channel perm[i]."""
    check_tensor(x)
    check_permutation(perm, x.shape[1])
    return x[:, np.asarray(perm)]


def residual_add(x: Tensor, fx: Tensor) -> Tensor:
    if x.shape != fx.shape:
        raise ShapeError(f"Cannot add tensors of shape {x.shape} and {fx.shape}.")
    return x + fx
