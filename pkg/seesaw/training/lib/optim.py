"""
SGD with momentum and L2 weight decay.

    v <- momentum * v + (grad + weight_decay * param)
    param <- param - lr * v

Parameters named in `no_decay` (batch norm affine terms and biases) take
the same step without the decay term.
"""
from __future__ import annotations

import logging
import typing as t
from dataclasses import dataclass, field

import numpy as np

from seesaw.nn.lib import LayerGraph, ShapeError

from .errors import NonFiniteGradientError

logger = logging.getLogger(__name__)

Arrays: t.TypeAlias = dict[str, np.ndarray]


def sgd_step(
    params: t.Mapping[str, np.ndarray],
    grads: t.Mapping[str, np.ndarray],
    velocity: t.Mapping[str, np.ndarray],
    lr: float,
    momentum: float,
    weight_decay: float,
    no_decay: t.Collection[str] = frozenset(),
) -> tuple[Arrays, Arrays]:
    """
    One update. Returns new (params, velocity) dicts; the inputs are not
    modified. A missing velocity entry starts at zero.

    The whole step is rejected if any gradient is not finite.
    """
    for name, param in params.items():
        if name not in grads:
            raise ShapeError(f"No gradient for {name}.")
        if grads[name].shape != param.shape:
            raise ShapeError(
                f"{name}: gradient shape {grads[name].shape} "
                f"does not match parameter shape {param.shape}."
            )
        if not np.isfinite(grads[name]).all():
            logger.error("rejecting SGD step: non-finite gradient for %s", name)
            raise NonFiniteGradientError(f"Gradient of {name} is not finite.")
    new_params: Arrays = {}
    new_velocity: Arrays = {}
    for name, param in params.items():
        grad = grads[name].astype(np.float64)
        if weight_decay and name not in no_decay:
            grad = grad + weight_decay * param
        v = velocity.get(name)
        v = grad if v is None else momentum * v + grad
        new_velocity[name] = v.astype(param.dtype)
        new_params[name] = (param - lr * v).astype(param.dtype)
    return new_params, new_velocity


@dataclass
class SGD:
    """Momentum state for one model, updated in place on every step."""

    momentum: float
    weight_decay: float
    velocity: Arrays = field(default_factory=dict)

    def step(self, model: LayerGraph, grads: t.Mapping[str, np.ndarray], lr: float):
        params, self.velocity = sgd_step(
            model.named_params(),
            grads,
            self.velocity,
            lr,
            self.momentum,
            self.weight_decay,
            model.no_decay_names(),
        )
        for name, value in params.items():
            model.set_array(name, value)
