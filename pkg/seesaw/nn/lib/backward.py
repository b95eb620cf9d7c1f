"""
Explicit backward passes, one per forward kernel in `ops`.

Each backward takes the forward inputs (recomputing whatever it needs from
them) plus the upstream gradient dE/d(output) and returns a `GradPair` of
gradients with respect to every input and every parameter.
"""
from __future__ import annotations

import math
import typing as t
from dataclasses import dataclass

import numpy as np

from .errors import GradientModeError, ShapeError
from .ops import (
    BN_EPSILON,
    Mode,
    Tensor,
    _pad_hw,
    _tap,
    batch_statistics,
    check_grouped_weights,
    conv_output_size,
)
from .partition import ChannelPartition, group_input_indices, inverse_permutation


@dataclass(frozen=True)
class GradPair:
    input_grad: tuple[np.ndarray, ...]
    """One gradient per forward input, each shaped like that input."""

    param_grad: tuple[np.ndarray, ...] = ()
    """One gradient per parameter, each shaped like that parameter."""


def _check_upstream(upstream: Tensor, expected: tuple[int, ...]):
    if upstream.shape != tuple(expected):
        raise ShapeError(
            f"Upstream gradient has shape {upstream.shape}, "
            f"but the forward output was {tuple(expected)}."
        )


def backward_conv1x1_grouped(
    x: Tensor,
    weights: t.Sequence[np.ndarray],
    pin: ChannelPartition,
    pout: ChannelPartition,
    upstream: Tensor,
    share_width: int = 0,
) -> GradPair:
    check_grouped_weights(weights, pin, pout, share_width)
    n, _, h, w = x.shape
    _check_upstream(upstream, (n, pout.total, h, w))
    dx = np.zeros_like(x)
    dweights = []
    for weight, channels, out_slice in zip(
        weights, group_input_indices(pin, share_width), pout.slices()
    ):
        g = upstream[:, out_slice]
        dweights.append(np.einsum("nohw,nihw->oi", g, x[:, channels]))
        # Shared channels are read by two groups; accumulate.
        dx[:, channels] += np.einsum("oi,nohw->nihw", weight, g)
    return GradPair(input_grad=(dx,), param_grad=tuple(dweights))


def backward_depthwise_conv3x3(
    x: Tensor, weights: np.ndarray, stride: int, upstream: Tensor
) -> GradPair:
    n, c, h, w = x.shape
    ho, wo = math.ceil(h / stride), math.ceil(w / stride)
    _check_upstream(upstream, (n, c, ho, wo))
    xp = _pad_hw(x, 1)
    dxp = np.zeros_like(xp)
    dweights = np.zeros_like(weights)
    for ky in range(3):
        for kx in range(3):
            window = _tap(xp, ky, kx, stride, ho, wo)
            dweights[:, ky, kx] = np.einsum("nchw,nchw->c", upstream, window)
            _tap(dxp, ky, kx, stride, ho, wo)[...] += (
                weights[None, :, ky, kx, None, None] * upstream
            )
    return GradPair(
        input_grad=(dxp[:, :, 1 : 1 + h, 1 : 1 + w],), param_grad=(dweights,)
    )


def backward_conv2d_dense(
    x: Tensor, weights: np.ndarray, stride: int, pad: int, upstream: Tensor
) -> GradPair:
    n = x.shape[0]
    cout, _, kh, kw = weights.shape
    ho = conv_output_size(x.shape[2], kh, stride, pad)
    wo = conv_output_size(x.shape[3], kw, stride, pad)
    _check_upstream(upstream, (n, cout, ho, wo))
    xp = _pad_hw(x, pad)
    dxp = np.zeros_like(xp)
    dweights = np.zeros_like(weights)
    for ky in range(kh):
        for kx in range(kw):
            window = _tap(xp, ky, kx, stride, ho, wo)
            dweights[:, :, ky, kx] = np.einsum("nohw,nchw->oc", upstream, window)
            _tap(dxp, ky, kx, stride, ho, wo)[...] += np.einsum(
                "oc,nohw->nchw", weights[:, :, ky, kx], upstream
            )
    h, w = x.shape[2:]
    return GradPair(
        input_grad=(dxp[:, :, pad : pad + h, pad : pad + w],), param_grad=(dweights,)
    )


def backward_relu6(x: Tensor, upstream: Tensor) -> GradPair:
    """The subgradient at the kinks x = 0 and x = 6 is 0."""
    _check_upstream(upstream, x.shape)
    return GradPair(input_grad=(upstream * ((x > 0) & (x < 6)),))


def backward_batchnorm(
    x: Tensor,
    gamma: np.ndarray,
    upstream: Tensor,
    mode: Mode = "train",
    eps: float = BN_EPSILON,
) -> GradPair:
    """
    Gradient of train-mode batch norm, including the terms that flow through
    the batch mean and variance. Returns (dx,) and (dgamma, dbeta).
    """
    if mode != "train":
        raise GradientModeError("Batch norm backward is only defined in train mode.")
    _check_upstream(upstream, x.shape)
    stats = batch_statistics(x)
    m = stats.count
    inv_std = 1.0 / np.sqrt(stats.var + eps)
    xhat = (x - stats.mean[None, :, None, None]) * inv_std[None, :, None, None]
    dbeta = upstream.sum(axis=(0, 2, 3))
    dgamma = (upstream * xhat).sum(axis=(0, 2, 3))
    dx = (gamma * inv_std / m)[None, :, None, None] * (
        m * upstream - dbeta[None, :, None, None] - xhat * dgamma[None, :, None, None]
    )
    return GradPair(
        input_grad=(dx.astype(x.dtype, copy=False),),
        param_grad=(dgamma.astype(gamma.dtype), dbeta.astype(gamma.dtype)),
    )


def backward_global_avgpool(x: Tensor, upstream: Tensor) -> GradPair:
    n, c, h, w = x.shape
    _check_upstream(upstream, (n, c, 1, 1))
    dx = np.broadcast_to(upstream / (h * w), x.shape).astype(x.dtype)
    return GradPair(input_grad=(dx,))


def backward_channel_permute(
    perm: t.Sequence[int] | np.ndarray, upstream: Tensor
) -> GradPair:
    if upstream.ndim != 4 or upstream.shape[1] != len(perm):
        raise ShapeError(
            f"Upstream gradient has shape {upstream.shape}, "
            f"but the permute covers {len(perm)} channels."
        )
    return GradPair(input_grad=(upstream[:, inverse_permutation(perm)],))


def backward_residual_add(x: Tensor, fx: Tensor, upstream: Tensor) -> GradPair:
    """The shortcut passes the upstream gradient through unchanged."""
    _check_upstream(upstream, x.shape)
    if fx.shape != x.shape:
        raise ShapeError(f"Cannot add tensors of shape {x.shape} and {fx.shape}.")
    return GradPair(input_grad=(upstream, upstream))
