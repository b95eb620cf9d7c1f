"""
Building blocks: the seesaw block and its variants, plus the two baselines.

Every builder turns a `BlockSpec` into a `Block` whose body is a
`LayerGraph`. The shortcut exists exactly when the block keeps both stride 1
and its channel count.

Layer layouts (BN = batch norm):

- seesaw_shuffle: gconv(k -> tk), BN, permute, dw3x3/s, BN, ReLU6, gconv(tk -> k'), BN
- seesaw_share: gconv(k -> tk), BN, dw3x3/s, BN, ReLU6, shared gconv(tk -> k'), BN
- igcv3: gconv(k -> tk), BN, permute, dw3x3/s, BN, ReLU6, gconv(tk -> k'), BN, permute
- mbv2: conv(k -> tk), BN, ReLU6, dw3x3/s, BN, ReLU6, conv(tk -> k'), BN

There is no activation after the first pointwise convolution of the group
variants, and the projection is linear in all four.
"""
from __future__ import annotations

import typing as t

import numpy as np
from pydantic import validator

from seesaw.lib.base_schema import BaseSchema

from .errors import PartitionError, SpecError
from .layers import (
    BatchNorm,
    Block,
    ChannelPermute,
    Conv2d,
    DepthwiseConv3x3,
    GroupedConv1x1,
    Layer,
    LayerGraph,
    ReLU6,
)
from .partition import (
    DEFAULT_RATIO,
    EVEN_RATIO,
    ChannelPartition,
    default_share_width,
    group_input_indices,
    make_partition,
    make_seesaw_permutation,
    shuffle_permutation,
)

BlockKind: t.TypeAlias = t.Literal["seesaw_shuffle", "seesaw_share", "igcv3", "mbv2"]

BLOCK_KINDS: tuple[BlockKind, ...] = t.get_args(BlockKind)


class BlockSpec(BaseSchema):
    """Declarative description of one building block."""

    kind: BlockKind
    in_channels: int
    expansion_ratio: int = 6
    out_channels: int
    stride: int = 1
    ratio: tuple[int, ...] = DEFAULT_RATIO
    """Group-size ratio for the pointwise convolutions (group variants only)."""

    share_width: int | None = None
    """Channels shared across each group boundary; None picks the default."""

    permute: bool = True
    """If False, the block is built without its channel permute(s)."""

    @validator("in_channels", "out_channels", "expansion_ratio")
    def _positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("must be >= 1")
        return value

    @validator("stride")
    def _stride(cls, value: int) -> int:
        if value not in (1, 2):
            raise ValueError("stride must be 1 or 2")
        return value

    @validator("ratio")
    def _ratio(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        if not value or any(r < 1 for r in value):
            raise ValueError("ratio entries must be positive")
        return value

    @validator("share_width")
    def _share_width(cls, value: int | None) -> int | None:
        if value is not None and value < 0:
            raise ValueError("share_width must be >= 0")
        return value

    @property
    def hidden_channels(self) -> int:
        return self.in_channels * self.expansion_ratio

    @property
    def has_shortcut(self) -> bool:
        return self.stride == 1 and self.in_channels == self.out_channels


def _partitions(
    spec: BlockSpec, ratio: t.Sequence[int]
) -> tuple[ChannelPartition, ChannelPartition, ChannelPartition]:
    """Partitions of the block's input, hidden and output widths."""
    try:
        return (
            make_partition(spec.in_channels, ratio),
            make_partition(spec.hidden_channels, ratio),
            make_partition(spec.out_channels, ratio),
        )
    except PartitionError as e:
        raise SpecError(f"{spec.kind} block: {e}") from e


def _require(spec: BlockSpec, kind: BlockKind):
    if spec.kind != kind:
        raise SpecError(f"Expected a {kind} spec, got {spec.kind}.")


def _even_partitions(
    spec: BlockSpec,
) -> tuple[ChannelPartition, ChannelPartition, ChannelPartition]:
    partitions = _partitions(spec, EVEN_RATIO)
    for partition in partitions:
        if not partition.is_even:
            raise SpecError(
                f"igcv3 block needs even channel counts, got {partition.total}."
            )
    return partitions


def _resolved_share_width(spec: BlockSpec, hidden: ChannelPartition) -> int:
    share_width = (
        default_share_width(hidden) if spec.share_width is None else spec.share_width
    )
    try:
        group_input_indices(hidden, share_width)
    except PartitionError as e:
        raise SpecError(f"seesaw_share block: {e}") from e
    return share_width


def check_block_spec(spec: BlockSpec):
    """Raise `SpecError` if `spec` describes a block that cannot be built."""
    match spec.kind:
        case "igcv3":
            _even_partitions(spec)
        case "seesaw_share":
            _resolved_share_width(spec, _partitions(spec, spec.ratio)[1])
        case "seesaw_shuffle":
            _partitions(spec, spec.ratio)


def _block(name: str, spec: BlockSpec, layers: list[Layer]) -> Block:
    return Block(name, LayerGraph(layers), shortcut=spec.has_shortcut, spec=spec)


def build_seesaw_shuffle_block(
    spec: BlockSpec, name: str = "block", rng: np.random.Generator | None = None
) -> Block:
    """The seesaw block with a single channel permute after the expansion."""
    _require(spec, "seesaw_shuffle")
    rng = rng or np.random.default_rng(0)
    pin, hidden, pout = _partitions(spec, spec.ratio)
    layers: list[Layer] = [
        GroupedConv1x1("gconv1", pin, hidden, rng=rng),
        BatchNorm("bn1", hidden.total),
    ]
    if spec.permute:
        permutation = make_seesaw_permutation(hidden, hidden)
        layers.append(ChannelPermute("permute", permutation))
    layers += [
        DepthwiseConv3x3("dwconv", hidden.total, spec.stride, rng=rng),
        BatchNorm("bn2", hidden.total),
        ReLU6("relu"),
        GroupedConv1x1("gconv2", hidden, pout, rng=rng),
        BatchNorm("bn3", pout.total),
    ]
    return _block(name, spec, layers)


def build_seesaw_share_block(
    spec: BlockSpec, name: str = "block", rng: np.random.Generator | None = None
) -> Block:
    """
    The seesaw block without any permute: the projection's groups overlap,
    each reading `share_width` channels of the next group's slice as well.
    """
    _require(spec, "seesaw_share")
    rng = rng or np.random.default_rng(0)
    pin, hidden, pout = _partitions(spec, spec.ratio)
    share_width = _resolved_share_width(spec, hidden)
    layers: list[Layer] = [
        GroupedConv1x1("gconv1", pin, hidden, rng=rng),
        BatchNorm("bn1", hidden.total),
        DepthwiseConv3x3("dwconv", hidden.total, spec.stride, rng=rng),
        BatchNorm("bn2", hidden.total),
        ReLU6("relu"),
    ]
    layers += [
        GroupedConv1x1("gconv2", hidden, pout, share_width, rng=rng),
        BatchNorm("bn3", pout.total),
    ]
    return _block(name, spec, layers)


def build_igcv3_block(
    spec: BlockSpec, name: str = "block", rng: np.random.Generator | None = None
) -> Block:
    """The IGCV3 baseline: even two-group convolutions and two permutes."""
    _require(spec, "igcv3")
    rng = rng or np.random.default_rng(0)
    pin, hidden, pout = _even_partitions(spec)
    layers: list[Layer] = [
        GroupedConv1x1("gconv1", pin, hidden, rng=rng),
        BatchNorm("bn1", hidden.total),
    ]
    if spec.permute:
        layers.append(ChannelPermute("permute1", shuffle_permutation(hidden.total, 2)))
    layers += [
        DepthwiseConv3x3("dwconv", hidden.total, spec.stride, rng=rng),
        BatchNorm("bn2", hidden.total),
        ReLU6("relu"),
        GroupedConv1x1("gconv2", hidden, pout, rng=rng),
        BatchNorm("bn3", pout.total),
    ]
    if spec.permute:
        layers.append(ChannelPermute("permute2", shuffle_permutation(pout.total, 2)))
    return _block(name, spec, layers)


def build_mbv2_block(
    spec: BlockSpec, name: str = "block", rng: np.random.Generator | None = None
) -> Block:
    """The MobileNetV2 inverted residual with dense pointwise convolutions."""
    _require(spec, "mbv2")
    rng = rng or np.random.default_rng(0)
    hidden = spec.hidden_channels
    layers: list[Layer] = [
        Conv2d("conv1", spec.in_channels, hidden, kernel=1, rng=rng),
        BatchNorm("bn1", hidden),
        ReLU6("relu1"),
        DepthwiseConv3x3("dwconv", hidden, spec.stride, rng=rng),
        BatchNorm("bn2", hidden),
        ReLU6("relu2"),
        Conv2d("conv2", hidden, spec.out_channels, kernel=1, rng=rng),
        BatchNorm("bn3", spec.out_channels),
    ]
    return _block(name, spec, layers)


BUILDERS: dict[BlockKind, t.Callable[..., Block]] = {
    "seesaw_shuffle": build_seesaw_shuffle_block,
    "seesaw_share": build_seesaw_share_block,
    "igcv3": build_igcv3_block,
    "mbv2": build_mbv2_block,
}


def build_block(
    spec: BlockSpec, name: str = "block", rng: np.random.Generator | None = None
) -> Block:
    return BUILDERS[spec.kind](spec, name=name, rng=rng)
