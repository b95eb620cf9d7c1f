"""
Whole-network descriptions and the builder that turns them into graphs.

A `ModelSpec` is a stem convolution, a table of block stages, a 1x1 head
convolution, global pooling and a classifier. The stage table follows the
inverted-residual layout: each stage has an expansion ratio t, output width
c, repeat count n and the stride s of its first block.
"""
from __future__ import annotations

import hashlib
import logging
import typing as t

import numpy as np
from pydantic import ValidationError, root_validator, validator

from seesaw.lib.base_schema import BaseSchema

from .blocks import BlockKind, BlockSpec, build_block, check_block_spec
from .errors import SpecError
from .layers import BatchNorm, Classifier, Conv2d, GlobalAvgPool, LayerGraph, ReLU6
from .partition import DEFAULT_RATIO, EVEN_RATIO

logger = logging.getLogger(__name__)

Arch: t.TypeAlias = t.Literal["seesaw-shuffle", "seesaw-share", "igcv3", "mbv2"]
DepthVariant: t.TypeAlias = t.Literal["0.5D", "1.0D"]
InputLayout: t.TypeAlias = t.Literal["imagenet_224", "cifar_32"]

ARCHS: tuple[Arch, ...] = t.get_args(Arch)

ARCH_BLOCK_KIND: dict[Arch, BlockKind] = {
    "seesaw-shuffle": "seesaw_shuffle",
    "seesaw-share": "seesaw_share",
    "igcv3": "igcv3",
    "mbv2": "mbv2",
}

# (t, c, s) per stage; repeat counts come from the depth variant.
STAGE_LAYOUT: tuple[tuple[int, int, int], ...] = (
    (1, 16, 1),
    (6, 24, 2),
    (6, 32, 2),
    (6, 64, 2),
    (6, 96, 1),
    (6, 160, 2),
    (6, 320, 1),
)

DEPTH_REPEATS: dict[DepthVariant, tuple[int, ...]] = {
    "1.0D": (1, 4, 6, 8, 6, 6, 1),
    "0.5D": (1, 2, 3, 4, 3, 3, 1),
}
"""The 0.5D repeats are also MobileNetV2's own."""

STEM_CHANNELS = 32
HEAD_CHANNELS = 1280

INPUT_SIZE: dict[InputLayout, int] = {"imagenet_224": 224, "cifar_32": 32}


class StageSpec(BaseSchema):
    kind: BlockKind
    t: int
    c: int
    n: int
    s: int
    ratio: tuple[int, ...] = DEFAULT_RATIO

    @validator("t", "c", "n")
    def _positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("must be >= 1")
        return value

    @validator("s")
    def _stride(cls, value: int) -> int:
        if value not in (1, 2):
            raise ValueError("stride must be 1 or 2")
        return value


class ModelSpec(BaseSchema):
    arch: Arch
    stages: list[StageSpec]
    stem_channels: int = STEM_CHANNELS
    head_channels: int = HEAD_CHANNELS
    num_classes: int = 1000
    depth_variant: DepthVariant = "1.0D"
    width_multiplier: float = 1.0
    input_layout: InputLayout = "imagenet_224"
    share_width: int | None = None
    permute: bool = True

    @validator("stages")
    def _stages(cls, value: list[StageSpec]) -> list[StageSpec]:
        if not value:
            raise ValueError("a model needs at least one stage")
        return value

    @validator("num_classes", "stem_channels", "head_channels")
    def _positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("must be >= 1")
        return value

    @validator("width_multiplier")
    def _multiplier(cls, value: float) -> float:
        if value <= 0:
            raise ValueError("width multiplier must be > 0")
        return value

    @root_validator(skip_on_failure=True)
    def _stage_widths(cls, values: dict) -> dict:
        # Every stage's ratio has to split its resolved widths.
        try:
            for spec in block_specs(cls.construct(**values)):
                check_block_spec(spec)
        except SpecError as e:
            raise ValueError(str(e)) from e
        return values

    @property
    def input_size(self) -> int:
        return INPUT_SIZE[self.input_layout]

    def input_shape(self, batch: int = 1) -> tuple[int, int, int, int]:
        return (batch, 3, self.input_size, self.input_size)

    def spec_hash(self) -> int:
        """Stable 64-bit fingerprint of everything that shapes the weights."""
        digest = hashlib.sha256(self.json(sort_keys=True).encode()).digest()
        return int.from_bytes(digest[:8], "little")


def resolve_variant(arch: Arch, variant: str) -> DepthVariant:
    """
    Map a variant label to a depth variant. "1.0" names an architecture's
    native depth: MobileNetV2's own repeats, 1.0D for the others.
    """
    if variant == "1.0":
        return "0.5D" if arch == "mbv2" else "1.0D"
    if variant not in DEPTH_REPEATS:
        raise SpecError(f"Unknown variant {variant!r}; use 0.5D, 1.0D or 1.0.")
    return t.cast(DepthVariant, variant)


def make_model_spec(
    arch: Arch = "seesaw-shuffle",
    variant: str = "1.0D",
    *,
    num_classes: int = 1000,
    width_multiplier: float = 1.0,
    input_layout: InputLayout = "imagenet_224",
    expansion: int | None = None,
    ratio: t.Sequence[int] = DEFAULT_RATIO,
    share_width: int | None = None,
    permute: bool = True,
) -> ModelSpec:
    """The standard stage table for `arch`, as a validated `ModelSpec`."""
    if arch not in ARCHS:
        raise SpecError(f"Unknown architecture {arch!r}.")
    depth = resolve_variant(arch, variant)
    kind = ARCH_BLOCK_KIND[arch]
    stages = []
    for index, ((t_, c, s), n) in enumerate(zip(STAGE_LAYOUT, DEPTH_REPEATS[depth])):
        last = index == len(STAGE_LAYOUT) - 1
        stage_ratio = EVEN_RATIO if last or kind == "igcv3" else tuple(ratio)
        stages.append(dict(kind=kind, t=t_, c=c, n=n, s=s, ratio=stage_ratio))
    try:
        spec = ModelSpec(
            arch=arch,
            stages=stages,
            num_classes=num_classes,
            depth_variant=depth,
            width_multiplier=width_multiplier,
            input_layout=input_layout,
            share_width=share_width,
            permute=permute,
        )
    except ValidationError as e:
        raise SpecError(str(e)) from e
    if expansion is not None:
        spec = set_expansion(spec, expansion)
    return spec


def set_expansion(spec: ModelSpec, expansion: int) -> ModelSpec:
    """A copy of `spec` with every stage but the first expanding by `expansion`."""
    if expansion < 1:
        raise SpecError(f"Expansion ratio must be >= 1, got {expansion}.")
    stages = [spec.stages[0]] + [
        stage.copy(update={"t": expansion}) for stage in spec.stages[1:]
    ]
    return spec.copy(update={"stages": stages})


def scale_width(channels: int, multiplier: float, granularity: int) -> int:
    """
    Scale a channel count. At multiplier 1.0 widths are kept as they are;
    otherwise they round to the nearest multiple of `granularity`.
    """
    if multiplier == 1.0:
        return channels
    return max(granularity, granularity * round(channels * multiplier / granularity))


def _granularity(stage: StageSpec) -> int:
    return 1 if stage.kind == "mbv2" else sum(stage.ratio)


def stage_strides(spec: ModelSpec) -> tuple[int, list[int]]:
    """
    The stem stride and each stage's first-block stride. The CIFAR layout
    runs the stem and the first downsampling stage at stride 1.
    """
    strides = [stage.s for stage in spec.stages]
    if spec.input_layout == "imagenet_224":
        return 2, strides
    first_down = next((i for i, s in enumerate(strides) if s == 2), None)
    if first_down is not None:
        strides[first_down] = 1
    return 1, strides


def block_specs(spec: ModelSpec) -> list[BlockSpec]:
    """Every block of the network in order, with the widths resolved."""
    _, strides = stage_strides(spec)
    granularity = max(_granularity(stage) for stage in spec.stages)
    in_channels = scale_width(spec.stem_channels, spec.width_multiplier, granularity)
    specs = []
    for stage, stride in zip(spec.stages, strides):
        out_channels = scale_width(
            stage.c, spec.width_multiplier, _granularity(stage)
        )
        for repeat in range(stage.n):
            try:
                specs.append(
                    BlockSpec(
                        kind=stage.kind,
                        in_channels=in_channels,
                        expansion_ratio=stage.t,
                        out_channels=out_channels,
                        stride=stride if repeat == 0 else 1,
                        ratio=stage.ratio,
                        share_width=spec.share_width,
                        permute=spec.permute,
                    )
                )
            except ValidationError as e:
                raise SpecError(str(e)) from e
            in_channels = out_channels
    return specs


def build_model(spec: ModelSpec, seed: int = 0) -> LayerGraph:
    """
    Build the network for `spec`. Two builds with the same spec and seed
    have identical parameters.
    """
    rng = np.random.default_rng(seed)
    stem_stride, _ = stage_strides(spec)
    blocks = block_specs(spec)
    granularity = max(_granularity(stage) for stage in spec.stages)
    stem_channels = blocks[0].in_channels
    head_channels = (
        scale_width(spec.head_channels, spec.width_multiplier, granularity)
        if spec.width_multiplier > 1.0
        else spec.head_channels
    )
    layers = [
        Conv2d(
            "stem_conv", 3, stem_channels, kernel=3, stride=stem_stride, pad=1, rng=rng
        ),
        BatchNorm("stem_bn", stem_channels),
        ReLU6("stem_relu"),
    ]
    layers += [
        build_block(block, name=f"block{i}", rng=rng) for i, block in enumerate(blocks)
    ]
    layers += [
        Conv2d("head_conv", blocks[-1].out_channels, head_channels, kernel=1, rng=rng),
        BatchNorm("head_bn", head_channels),
        ReLU6("head_relu"),
        GlobalAvgPool("pool"),
        Classifier("classifier", head_channels, spec.num_classes, rng=rng),
    ]
    model = LayerGraph(layers)
    logger.debug(
        "built %s %s (%s) with %d blocks",
        spec.arch,
        spec.depth_variant,
        spec.input_layout,
        len(blocks),
    )
    return model
