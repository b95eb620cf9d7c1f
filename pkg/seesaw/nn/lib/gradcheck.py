"""
Central finite-difference checks for the explicit backward passes.

The scalar being differentiated is E = sum(output * upstream) for a fixed
random `upstream`, so the analytic gradients are exactly what a layer's
backward returns for that upstream.

ReLU6 is only piecewise differentiable. An element whose +h or -h nudge
moves any ReLU6 input across 0 or 6 has no meaningful central difference,
so it is skipped and counted instead of compared.
"""
from __future__ import annotations

import logging
import typing as t
from dataclasses import dataclass, field

import numpy as np

from .errors import GradientModeError
from .layers import Block, Layer, LayerGraph, ReLU6, Trace
from .ops import Mode, Tensor

logger = logging.getLogger(__name__)

FD_STEP = 1e-5
ERROR_FLOOR = 1e-8

ABSOLUTE_FLOOR = 1e-8
"""Differences below this are round-off, whatever their relative size."""


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """
    |a - f| / max(|a|, |f|, 1e-8), elementwise, and 0 where |a - f| is
    below `ABSOLUTE_FLOOR` (gradients that are zero by construction).
    """
    difference = np.abs(analytic - numeric)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), ERROR_FLOOR)
    return np.where(difference < ABSOLUTE_FLOOR, 0.0, difference / scale)


class Evaluation(t.NamedTuple):
    """A forward result plus the ReLU6 region of every ReLU6 input."""

    output: np.ndarray
    regions: np.ndarray | None = None


def relu6_regions(x: np.ndarray) -> np.ndarray:
    """0 below or at 0, 1 strictly inside (0, 6), 2 at or above 6."""
    return ((x > 0).astype(np.int8) + (x >= 6)).ravel()


def _relu6_inputs(layer: Layer, saved: t.Any) -> t.Iterator[np.ndarray]:
    if isinstance(layer, ReLU6):
        yield saved
    elif isinstance(layer, Block):
        yield from _graph_relu6_inputs(layer.body, saved[2])


def _graph_relu6_inputs(graph: LayerGraph, trace: Trace) -> t.Iterator[np.ndarray]:
    for layer, saved in zip(graph.layers, trace.saved):
        yield from _relu6_inputs(layer, saved)


def _regions(inputs: t.Iterable[np.ndarray]) -> np.ndarray:
    parts = [relu6_regions(x) for x in inputs]
    if not parts:
        return np.zeros(0, dtype=np.int8)
    return np.concatenate(parts)


def traced_forward(layer: Layer | LayerGraph, x: Tensor, mode: Mode) -> Evaluation:
    """Run `layer` and record which side of each ReLU6 kink every input is on."""
    if isinstance(layer, LayerGraph):
        y, trace = layer.forward_trace(x, mode)
        return Evaluation(y, _regions(_graph_relu6_inputs(layer, trace)))
    y, saved = layer.forward(x, mode)
    return Evaluation(y, _regions(_relu6_inputs(layer, saved)))


@dataclass(frozen=True)
class GradCheckRow:
    name: str
    checked: int
    max_rel_error: float
    worst_index: tuple[int, ...] | None = None
    skipped: int = 0
    """Elements whose nudge crossed a ReLU6 kink."""


@dataclass(frozen=True)
class GradCheckReport:
    rows: list[GradCheckRow]
    tolerance: float

    @property
    def max_rel_error(self) -> float:
        return max((row.max_rel_error for row in self.rows), default=0.0)

    @property
    def checked(self) -> int:
        return sum(row.checked for row in self.rows)

    @property
    def skipped(self) -> int:
        return sum(row.skipped for row in self.rows)

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.max_rel_error < self.tolerance

    @property
    def failures(self) -> list[GradCheckRow]:
        return [row for row in self.rows if row.max_rel_error >= self.tolerance]

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (
            f"{verdict} max_rel_err={self.max_rel_error:.3e} "
            f"tolerance={self.tolerance:.0e} "
            f"checked={self.checked} skipped={self.skipped}"
        )


@dataclass
class _Sampler:
    """Chooses which elements of which arrays get a numeric derivative."""

    arrays: dict[str, np.ndarray]
    sample: int | None
    rng: np.random.Generator
    chosen: dict[str, list[tuple[int, ...]]] = field(default_factory=dict)

    def __post_init__(self):
        names = list(self.arrays)
        sizes = np.array([self.arrays[name].size for name in names])
        total = int(sizes.sum())
        if self.sample is None or self.sample >= total:
            flat = np.arange(total)
        else:
            flat = np.sort(self.rng.choice(total, size=self.sample, replace=False))
        bounds = np.concatenate([[0], np.cumsum(sizes)])
        for i, name in enumerate(names):
            local = flat[(flat >= bounds[i]) & (flat < bounds[i + 1])] - bounds[i]
            shape = self.arrays[name].shape
            self.chosen[name] = [
                tuple(int(v) for v in np.unravel_index(j, shape)) for j in local
            ]


def compare_gradients(
    forward: t.Callable[[], np.ndarray | Evaluation],
    arrays: dict[str, np.ndarray],
    analytic: dict[str, np.ndarray],
    upstream: np.ndarray | float = 1.0,
    tolerance: float = 1e-6,
    *,
    h: float = FD_STEP,
    sample: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """
    Compare `analytic` gradients against central differences.

    `forward` must read `arrays` by reference: each checked element is
    nudged in place by +h and -h and then restored. `sample` limits the
    check to that many randomly chosen elements across all arrays.

    When `forward` returns an `Evaluation` with regions, elements whose
    nudge changes any region are skipped.
    """
    for name, array in arrays.items():
        if array.dtype != np.float64:
            raise GradientModeError(
                f"Gradient checks run in double precision; {name} is {array.dtype}."
            )
    rng = rng or np.random.default_rng(0)
    upstream = np.asarray(upstream, dtype=np.float64)

    def energy() -> tuple[float, np.ndarray | None]:
        result = forward()
        if isinstance(result, Evaluation):
            return float(np.sum(result.output * upstream)), result.regions
        return float(np.sum(result * upstream)), None

    _, base = energy()

    def crosses(regions: np.ndarray | None) -> bool:
        return base is not None and not np.array_equal(regions, base)

    sampler = _Sampler(arrays, sample, rng)
    rows = []
    for name, array in arrays.items():
        indices = sampler.chosen[name]
        if not indices:
            continue
        kept: list[tuple[int, ...]] = []
        numeric = []
        for index in indices:
            original = array[index]
            array[index] = original + h
            plus, plus_regions = energy()
            array[index] = original - h
            minus, minus_regions = energy()
            array[index] = original
            if crosses(plus_regions) or crosses(minus_regions):
                continue
            kept.append(index)
            numeric.append((plus - minus) / (2 * h))
        skipped = len(indices) - len(kept)
        if skipped:
            logger.debug("%s: skipped %d elements at ReLU6 kinks", name, skipped)
        if not kept:
            rows.append(
                GradCheckRow(name=name, checked=0, max_rel_error=0.0, skipped=skipped)
            )
            continue
        expected = np.array([analytic[name][index] for index in kept])
        errors = relative_error(expected, np.array(numeric))
        worst = int(np.argmax(errors))
        rows.append(
            GradCheckRow(
                name=name,
                checked=len(kept),
                max_rel_error=float(errors[worst]),
                worst_index=kept[worst],
                skipped=skipped,
            )
        )
    report = GradCheckReport(rows=rows, tolerance=tolerance)
    logger.debug("gradient check: %s", report.summary())
    return report


def finite_difference_check(
    layer: Layer | LayerGraph,
    x: Tensor,
    tolerance: float = 1e-6,
    *,
    mode: Mode = "train",
    h: float = FD_STEP,
    sample: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """
    Check a layer's (or a whole graph's) backward pass against central
    differences, for the input `x` and every parameter.

    The layer and `x` must already be in double precision. The report has
    one row for the input (named "input") and one per parameter.
    """
    rng = rng or np.random.default_rng(0)
    if isinstance(layer, LayerGraph):
        y, trace = layer.forward_trace(x, mode)
        upstream = rng.normal(size=y.shape)
        dx, param_grads = layer.backward(trace, upstream)
        params = layer.named_params()
    else:
        y, saved = layer.forward(x, mode)
        upstream = rng.normal(size=y.shape)
        pair = layer.backward(saved, upstream)
        (dx,) = pair.input_grad
        params = layer.params()
        param_grads = dict(zip(params, pair.param_grad))

    arrays = {"input": x, **params}
    analytic = {"input": dx, **param_grads}
    return compare_gradients(
        lambda: traced_forward(layer, x, mode),
        arrays,
        analytic,
        upstream,
        tolerance,
        h=h,
        sample=sample,
        rng=rng,
    )
