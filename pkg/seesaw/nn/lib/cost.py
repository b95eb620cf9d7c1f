"""
Analytic parameter and multiply-add counts.

Convolutions cost one multiply-add per weight per output position. Batch
norm, activations, permutes, pooling and residual adds cost no multiply-adds;
batch norm still contributes its 2C affine parameters.
"""
from __future__ import annotations

import csv
import io
import typing as t
from dataclasses import dataclass

import humanize

from .errors import LayerKindError
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
    Shape,
)
from .model import ModelSpec, make_model_spec


@dataclass(frozen=True)
class LayerCost:
    params: int
    multi_adds: int

    def __add__(self, other: LayerCost) -> LayerCost:
        return LayerCost(self.params + other.params, self.multi_adds + other.multi_adds)


ZERO = LayerCost(0, 0)


def count_layer(layer: Layer, input_shape: Shape) -> LayerCost:
    """Params and multi-adds of one layer for an (n, c, h, w) input."""
    match layer:
        case Conv2d() | GroupedConv1x1() | DepthwiseConv3x3():
            _, _, h, w = layer.output_shape(input_shape)
            params = sum(array.size for array in layer.params().values())
            return LayerCost(params, params * h * w)
        case Classifier():
            return LayerCost(layer.weight.size + layer.bias.size, layer.weight.size)
        case BatchNorm():
            return LayerCost(2 * layer.channels, 0)
        case ReLU6() | ChannelPermute() | GlobalAvgPool():
            return ZERO
        case Block():
            total = ZERO
            for _, leaf, in_shape, _ in layer.body.layer_shapes(input_shape):
                total = total + count_layer(leaf, in_shape)
            return total
    raise LayerKindError(f"No cost rule for {layer!r}.")


@dataclass(frozen=True)
class CostRow:
    layer: str
    kind: str
    params: int
    multi_adds: int


@dataclass(frozen=True)
class CostReport:
    rows: list[CostRow]
    resolution: int

    @property
    def params(self) -> int:
        return sum(row.params for row in self.rows)

    @property
    def multi_adds(self) -> int:
        return sum(row.multi_adds for row in self.rows)

    def summary(self) -> str:
        """Totals rounded to 0.1M params and 1M multi-adds."""
        return (
            f"params={self.params / 1e6:.1f}M "
            f"multi_adds={self.multi_adds / 1e6:.0f}M"
        )

    def to_text(self) -> str:
        width = max([len(row.layer) for row in self.rows] + [5])
        lines = [
            f"{'layer':<{width}}  {'kind':<10}  {'params':>12}  {'multi_adds':>14}"
        ]
        for row in self.rows:
            lines.append(
                f"{row.layer:<{width}}  {row.kind:<10}  "
                f"{humanize.intcomma(row.params):>12}  "
                f"{humanize.intcomma(row.multi_adds):>14}"
            )
        lines.append(
            f"{'total':<{width}}  {'':<10}  {humanize.intcomma(self.params):>12}  "
            f"{humanize.intcomma(self.multi_adds):>14}"
        )
        return "\n".join(lines)

    def write_csv(self, stream: t.TextIO):
        writer = csv.writer(stream)
        writer.writerow(["layer", "kind", "params", "multi_adds"])
        for row in self.rows:
            writer.writerow([row.layer, row.kind, row.params, row.multi_adds])

    def to_csv(self) -> str:
        buffer = io.StringIO()
        self.write_csv(buffer)
        return buffer.getvalue()


def count_model(model: LayerGraph, input_resolution: int = 224) -> CostReport:
    """One row per leaf layer for a single (1, 3, r, r) image."""
    rows = []
    input_shape = (1, 3, input_resolution, input_resolution)
    for path, layer, in_shape, _ in model.layer_shapes(input_shape):
        cost = count_layer(layer, in_shape)
        rows.append(CostRow(path, layer.kind, cost.params, cost.multi_adds))
    return CostReport(rows=rows, resolution=input_resolution)


REFERENCE_COSTS: dict[tuple[str, str], tuple[float, float]] = {
    ("mbv2", "0.5D"): (3.5e6, 314e6),
    ("igcv3", "1.0D"): (3.5e6, 318e6),
    ("seesaw-shuffle", "1.0D"): (3.6e6, 361e6),
}
"""Published (params, multi-adds) for the standard 224x224 ImageNet networks."""


@dataclass(frozen=True)
class CostDeviation:
    params: float
    multi_adds: float
    reference_params: float
    reference_multi_adds: float

    def summary(self) -> str:
        return (
            f"reference_params={self.reference_params / 1e6:.1f}M "
            f"reference_multi_adds={self.reference_multi_adds / 1e6:.0f}M "
            f"params_deviation={self.params:+.1%} "
            f"multi_adds_deviation={self.multi_adds:+.1%}"
        )


def reference_deviation(spec: ModelSpec, report: CostReport) -> CostDeviation | None:
    """
    Relative distance of `report` from the published figures, when `spec` is
    one of the standard networks counted at 224x224; None otherwise.
    """
    reference = REFERENCE_COSTS.get((spec.arch, spec.depth_variant))
    if reference is None or report.resolution != 224:
        return None
    if spec != make_model_spec(spec.arch, spec.depth_variant):
        return None
    params, multi_adds = reference
    return CostDeviation(
        params=report.params / params - 1,
        multi_adds=report.multi_adds / multi_adds - 1,
        reference_params=params,
        reference_multi_adds=multi_adds,
    )
