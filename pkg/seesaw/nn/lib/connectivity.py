"""
Structural channel connectivity of layer chains.

Each layer kind maps to a boolean (out_channels x in_channels) relation;
a chain's connectivity is the boolean product of its layers' relations.
`jacobian_sparsity` measures the same thing numerically by perturbing one
input channel at a time, which is what the structural analysis is checked
against.
"""
from __future__ import annotations

import logging
import typing as t
from dataclasses import dataclass

import numpy as np

from . import ops
from .errors import LayerKindError, ShapeError
from .layers import (
    BatchNorm,
    Block,
    ChannelPermute,
    Classifier,
    Conv2d,
    DepthwiseConv3x3,
    GlobalAvgPool,
    GroupedConv1x1,
    Layer,
    LayerGraph,
    ReLU6,
)
from .partition import group_input_indices

logger = logging.getLogger(__name__)

Fragment: t.TypeAlias = LayerGraph | Layer | t.Sequence[Layer]


@dataclass(frozen=True)
class ConnectivityMatrix:
    """
    Entry (i, j) is True iff output channel i structurally depends on
    input channel j.
    """

    matrix: np.ndarray

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.dtype != np.bool_:
            raise ShapeError("Connectivity must be a 2-D boolean matrix.")

    @classmethod
    def identity(cls, channels: int) -> ConnectivityMatrix:
        return cls(np.eye(channels, dtype=bool))

    @classmethod
    def full(cls, out_channels: int, in_channels: int) -> ConnectivityMatrix:
        return cls(np.ones((out_channels, in_channels), dtype=bool))

    @property
    def out_channels(self) -> int:
        return self.matrix.shape[0]

    @property
    def in_channels(self) -> int:
        return self.matrix.shape[1]

    @property
    def is_full(self) -> bool:
        return bool(self.matrix.all())

    @property
    def density(self) -> float:
        return float(self.matrix.mean())

    @property
    def nonzero(self) -> int:
        return int(self.matrix.sum())

    def then(self, after: ConnectivityMatrix) -> ConnectivityMatrix:
        """Connectivity of `self` followed by `after`."""
        if after.in_channels != self.out_channels:
            raise ShapeError(
                f"Cannot compose {self.out_channels} outputs "
                f"with {after.in_channels} inputs."
            )
        product = after.matrix.astype(np.int64) @ self.matrix.astype(np.int64)
        return ConnectivityMatrix(product > 0)

    def union(self, other: ConnectivityMatrix) -> ConnectivityMatrix:
        if other.matrix.shape != self.matrix.shape:
            raise ShapeError("Cannot merge connectivity of different shapes.")
        return ConnectivityMatrix(self.matrix | other.matrix)

    def is_strictly_denser_than(self, other: ConnectivityMatrix) -> bool:
        """True if every dependency of `other` is kept and at least one is added."""
        return bool(
            (self.matrix >= other.matrix).all() and self.nonzero > other.nonzero
        )

    def render(self, on: str = "#", off: str = ".") -> str:
        return "\n".join(
            "".join(on if cell else off for cell in row) for row in self.matrix
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConnectivityMatrix):
            return NotImplemented
        return np.array_equal(self.matrix, other.matrix)

    def __hash__(self) -> int:
        return hash((self.matrix.shape, self.matrix.tobytes()))


def _grouped(layer: GroupedConv1x1) -> ConnectivityMatrix:
    matrix = np.zeros((layer.out_channels, layer.in_channels), dtype=bool)
    for channels, rows in zip(
        group_input_indices(layer.pin, layer.share_width), layer.pout.slices()
    ):
        matrix[rows.start : rows.stop][:, channels] = True
    return ConnectivityMatrix(matrix)


def _permute(layer: ChannelPermute) -> ConnectivityMatrix:
    channels = len(layer.perm)
    matrix = np.zeros((channels, channels), dtype=bool)
    matrix[np.arange(channels), layer.perm] = True
    return ConnectivityMatrix(matrix)


def layer_connectivity(layer: Layer, channels: int) -> ConnectivityMatrix:
    """
    The relation one layer imposes; `channels` is its input channel count
    (needed by the channel-wise kinds, which carry no width of their own).
    """
    match layer:
        case GroupedConv1x1():
            return _grouped(layer)
        case Conv2d():
            return ConnectivityMatrix.full(layer.out_channels, layer.in_channels)
        case Classifier():
            return ConnectivityMatrix.full(layer.classes, layer.in_channels)
        case ChannelPermute():
            return _permute(layer)
        case DepthwiseConv3x3() | BatchNorm() | ReLU6() | GlobalAvgPool():
            return ConnectivityMatrix.identity(channels)
        case Block():
            body = analyze_connectivity(layer.body, channels)
            if layer.shortcut:
                return body.union(ConnectivityMatrix.identity(channels))
            return body
    raise LayerKindError(f"No connectivity rule for {layer!r}.")


def _layers(fragment: Fragment) -> list[Layer]:
    if isinstance(fragment, Layer):
        return [fragment]
    return list(fragment)


def _in_channels(layer: Layer) -> int:
    match layer:
        case GroupedConv1x1() | Conv2d() | Classifier():
            return layer.in_channels
        case DepthwiseConv3x3() | BatchNorm():
            return layer.channels
        case ChannelPermute():
            return len(layer.perm)
        case Block():
            return _in_channels(layer.body.layers[0])
    raise LayerKindError(f"Cannot infer the input width of {layer!r}.")


def connectivity_by_depth(
    fragment: Fragment, channels: int | None = None
) -> list[ConnectivityMatrix]:
    """Cumulative connectivity after each layer of `fragment`."""
    layers = _layers(fragment)
    if not layers:
        raise ShapeError("Cannot analyze an empty fragment.")
    width = _in_channels(layers[0]) if channels is None else channels
    current = ConnectivityMatrix.identity(width)
    history = []
    for layer in layers:
        current = current.then(layer_connectivity(layer, current.out_channels))
        history.append(current)
    return history


def analyze_connectivity(
    fragment: Fragment, channels: int | None = None
) -> ConnectivityMatrix:
    """
    Boolean reachability from every input channel to every output channel.

    `fragment` may be a single layer, a `LayerGraph`, or a list of layers
    or blocks applied in order.
    """
    result = connectivity_by_depth(fragment, channels)[-1]
    logger.debug(
        "connectivity %dx%d, density %.3f",
        result.out_channels,
        result.in_channels,
        result.density,
    )
    return result


def _linear_forward(layers: t.Iterable[Layer], x: np.ndarray) -> np.ndarray:
    for layer in layers:
        if isinstance(layer, ReLU6):
            continue
        if isinstance(layer, Block):
            fx = _linear_forward(layer.body, x)
            x = ops.residual_add(x, fx) if layer.shortcut else fx
        else:
            x = layer(x, "infer")
    return x


def jacobian_sparsity(
    fragment: Fragment,
    input_shape: tuple[int, int, int, int],
    rng: np.random.Generator | None = None,
) -> ConnectivityMatrix:
    """
    Measure connectivity by perturbing each input channel in turn.

    Runs in infer mode in double precision with every ReLU6 replaced by the
    identity. A clipped hidden channel would otherwise hide a dependency
    that exists for other inputs. Output channels that do not depend on
    the perturbed channel come out bit-identical, so any change at all
    marks a dependency.
    """
    rng = rng or np.random.default_rng(0)
    layers = _layers(fragment)

    def run(x: np.ndarray) -> np.ndarray:
        y = _linear_forward(layers, x)
        return y.reshape(y.shape[0], y.shape[1], -1)

    x = rng.normal(1.0, 1.0, size=input_shape)
    base = run(x)
    matrix = np.zeros((base.shape[1], input_shape[1]), dtype=bool)
    for channel in range(input_shape[1]):
        moved = x.copy()
        moved[:, channel] += rng.normal(0.0, 1.0, size=moved[:, channel].shape)
        matrix[:, channel] = (run(moved) != base).any(axis=(0, 2))
    return ConnectivityMatrix(matrix)


def shortcut_situations(block: Block) -> tuple[np.ndarray, np.ndarray]:
    """
    Split a block's output channels by whether the body's output channel i
    depends on input channel i (the same index the shortcut carries).

    Returns (same_index, other_index) channel arrays.
    """
    if not block.shortcut:
        raise ShapeError(f"{block.name} has no shortcut.")
    body = analyze_connectivity(block.body)
    same = np.flatnonzero(np.diag(body.matrix))
    other = np.flatnonzero(~np.diag(body.matrix))
    return same, other
