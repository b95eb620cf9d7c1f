"""
Concrete layers and the `LayerGraph` that chains them.

A layer owns its parameters (and, for batch norm, running statistics) but
no per-call state: `forward` returns the output together with whatever the
layer needs later, and `backward` takes that saved value back. Backward is a
fixed reverse sweep over the graph; there is no tape.
"""
from __future__ import annotations

import math
import typing as t

import numpy as np

from . import backward as bw
from . import ops
from .errors import ShapeError
from .ops import BatchNormState, Mode, Tensor
from .partition import ChannelPartition, check_permutation, group_input_indices

LayerKind: t.TypeAlias = t.Literal[
    "conv2d",
    "gconv1x1",
    "dwconv3x3",
    "batchnorm",
    "relu6",
    "permute",
    "avgpool",
    "classifier",
    "block",
]

Shape: t.TypeAlias = tuple[int, ...]


def he_normal(
    rng: np.random.Generator, shape: Shape, fan_out: int, dtype=np.float32
) -> np.ndarray:
    """Zero-mean normal with std sqrt(2 / fan_out)."""
    return rng.normal(0.0, math.sqrt(2.0 / fan_out), size=shape).astype(dtype)


class Layer:
    """Base class for everything that can sit in a `LayerGraph`."""

    kind: t.ClassVar[LayerKind]

    no_decay: t.ClassVar[frozenset[str]] = frozenset()
    """Parameter names exempt from weight decay."""

    def __init__(self, name: str):
        self.name = name

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name}>"

    def params(self) -> dict[str, np.ndarray]:
        """Trainable parameters, keyed by local name, in a fixed order."""
        return {}

    def buffers(self) -> dict[str, np.ndarray]:
        """Non-trainable state that must be saved with the weights."""
        return {}

    def set_array(self, name: str, value: np.ndarray):
        """Replace a parameter or buffer by name."""
        raise KeyError(f"{self.name} has no array named {name!r}")

    def forward(self, x: Tensor, mode: Mode = "infer") -> tuple[Tensor, t.Any]:
        raise NotImplementedError

    def backward(self, saved: t.Any, upstream: Tensor) -> bw.GradPair:
        raise NotImplementedError

    def output_shape(self, input_shape: Shape) -> Shape:
        raise NotImplementedError

    def __call__(self, x: Tensor, mode: Mode = "infer") -> Tensor:
        return self.forward(x, mode)[0]


class Conv2d(Layer):
    """Dense convolution without bias (batch norm supplies it)."""

    kind = "conv2d"

    def __init__(
        self,
        name: str,
        in_channels: int,
        out_channels: int,
        kernel: int,
        stride: int = 1,
        pad: int = 0,
        rng: np.random.Generator | None = None,
    ):
        super().__init__(name)
        rng = rng or np.random.default_rng(0)
        self.stride = stride
        self.pad = pad
        self.weight = he_normal(
            rng,
            (out_channels, in_channels, kernel, kernel),
            fan_out=out_channels * kernel * kernel,
        )

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def kernel(self) -> tuple[int, int]:
        return self.weight.shape[2], self.weight.shape[3]

    def params(self):
        return {"weight": self.weight}

    def set_array(self, name, value):
        if name != "weight":
            super().set_array(name, value)
        self.weight = value

    def forward(self, x, mode="infer"):
        return ops.conv2d_dense_forward(x, self.weight, self.stride, self.pad), x

    def backward(self, saved, upstream):
        return bw.backward_conv2d_dense(
            saved, self.weight, self.stride, self.pad, upstream
        )

    def output_shape(self, input_shape):
        n, _, h, w = input_shape
        kh, kw = self.kernel
        return (
            n,
            self.out_channels,
            ops.conv_output_size(h, kh, self.stride, self.pad),
            ops.conv_output_size(w, kw, self.stride, self.pad),
        )


class GroupedConv1x1(Layer):
    """
    Pointwise group convolution over (possibly uneven) partitions.

    With `share_width > 0`, group g also reads the first `share_width`
    channels of group (g + 1) mod G.
    """

    kind = "gconv1x1"

    def __init__(
        self,
        name: str,
        pin: ChannelPartition,
        pout: ChannelPartition,
        share_width: int = 0,
        rng: np.random.Generator | None = None,
    ):
        super().__init__(name)
        if len(pin) != len(pout):
            raise ShapeError(
                f"{name}: {len(pin)} input groups vs {len(pout)} output groups."
            )
        rng = rng or np.random.default_rng(0)
        self.pin = pin
        self.pout = pout
        self.share_width = share_width
        self.weights = [
            he_normal(rng, (out_g, in_g + share_width), fan_out=pout.total)
            for in_g, out_g in zip(pin, pout)
        ]

    @property
    def in_channels(self) -> int:
        return self.pin.total

    @property
    def out_channels(self) -> int:
        return self.pout.total

    def params(self):
        return {f"weight.{g}": weight for g, weight in enumerate(self.weights)}

    def set_array(self, name, value):
        prefix, _, index = name.partition(".")
        if prefix != "weight" or not index.isdigit():
            super().set_array(name, value)
        self.weights[int(index)] = value

    def forward(self, x, mode="infer"):
        y = ops.conv1x1_grouped_forward(
            x, self.weights, self.pin, self.pout, self.share_width
        )
        return y, x

    def backward(self, saved, upstream):
        return bw.backward_conv1x1_grouped(
            saved, self.weights, self.pin, self.pout, upstream, self.share_width
        )

    def output_shape(self, input_shape):
        n, _, h, w = input_shape
        return (n, self.out_channels, h, w)

    def masked_dense_weight(self) -> np.ndarray:
        """The equivalent dense (Cout, Cin) matrix, zero outside the groups."""
        dense = np.zeros((self.out_channels, self.in_channels), self.weights[0].dtype)
        for weight, channels, rows in zip(
            self.weights,
            group_input_indices(self.pin, self.share_width),
            self.pout.slices(),
        ):
            dense[rows.start : rows.stop][:, channels] = weight
        return dense


class DepthwiseConv3x3(Layer):
    kind = "dwconv3x3"

    def __init__(
        self,
        name: str,
        channels: int,
        stride: int = 1,
        rng: np.random.Generator | None = None,
    ):
        super().__init__(name)
        rng = rng or np.random.default_rng(0)
        self.stride = stride
        self.weight = he_normal(rng, (channels, 3, 3), fan_out=channels * 9)

    @property
    def channels(self) -> int:
        return self.weight.shape[0]

    def params(self):
        return {"weight": self.weight}

    def set_array(self, name, value):
        if name != "weight":
            super().set_array(name, value)
        self.weight = value

    def forward(self, x, mode="infer"):
        return ops.depthwise_conv3x3_forward(x, self.weight, self.stride), x

    def backward(self, saved, upstream):
        return bw.backward_depthwise_conv3x3(saved, self.weight, self.stride, upstream)

    def output_shape(self, input_shape):
        n, c, h, w = input_shape
        return (n, c, math.ceil(h / self.stride), math.ceil(w / self.stride))


class BatchNorm(Layer):
    kind = "batchnorm"
    no_decay = frozenset({"gamma", "beta"})

    def __init__(self, name: str, channels: int):
        super().__init__(name)
        self.gamma = np.ones(channels, dtype=np.float32)
        self.beta = np.zeros(channels, dtype=np.float32)
        self.state = BatchNormState.fresh(channels)

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def buffers(self):
        return {"running_mean": self.state.mean, "running_var": self.state.var}

    def set_array(self, name, value):
        if name == "gamma":
            self.gamma = value
        elif name == "beta":
            self.beta = value
        elif name == "running_mean":
            self.state.mean = value
        elif name == "running_var":
            self.state.var = value
        else:
            super().set_array(name, value)

    def forward(self, x, mode="infer"):
        y = ops.batchnorm_forward(x, self.gamma, self.beta, self.state, mode)
        return y, (x, mode)

    def backward(self, saved, upstream):
        x, mode = saved
        return bw.backward_batchnorm(x, self.gamma, upstream, mode, self.state.eps)

    def output_shape(self, input_shape):
        return tuple(input_shape)


class ReLU6(Layer):
    kind = "relu6"

    def forward(self, x, mode="infer"):
        return ops.relu6(x), x

    def backward(self, saved, upstream):
        return bw.backward_relu6(saved, upstream)

    def output_shape(self, input_shape):
        return tuple(input_shape)


class ChannelPermute(Layer):
    """Fixed channel reordering: output channel i is input channel perm[i]."""

    kind = "permute"

    def __init__(self, name: str, perm: np.ndarray):
        super().__init__(name)
        check_permutation(perm)
        self.perm = np.asarray(perm, dtype=np.int64)

    def forward(self, x, mode="infer"):
        return ops.channel_permute(x, self.perm), None

    def backward(self, saved, upstream):
        return bw.backward_channel_permute(self.perm, upstream)

    def output_shape(self, input_shape):
        return tuple(input_shape)


class GlobalAvgPool(Layer):
    kind = "avgpool"

    def forward(self, x, mode="infer"):
        return ops.global_avgpool(x), x

    def backward(self, saved, upstream):
        return bw.backward_global_avgpool(saved, upstream)

    def output_shape(self, input_shape):
        n, c, _, _ = input_shape
        return (n, c, 1, 1)


class Classifier(Layer):
    """
    1x1 convolution with bias over the pooled (n, C, 1, 1) map.

    The output is flattened to (n, classes) logits.
    """

    kind = "classifier"
    no_decay = frozenset({"bias"})

    def __init__(
        self,
        name: str,
        in_channels: int,
        classes: int,
        rng: np.random.Generator | None = None,
    ):
        super().__init__(name)
        rng = rng or np.random.default_rng(0)
        self.weight = rng.normal(0.0, 0.01, size=(classes, in_channels)).astype(
            np.float32
        )
        self.bias = np.zeros(classes, dtype=np.float32)

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def classes(self) -> int:
        return self.weight.shape[0]

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def set_array(self, name, value):
        if name == "weight":
            self.weight = value
        elif name == "bias":
            self.bias = value
        else:
            super().set_array(name, value)

    def forward(self, x, mode="infer"):
        ops.check_tensor(x)
        if x.shape[1:] != (self.in_channels, 1, 1):
            raise ShapeError(
                f"{self.name} expects (n, {self.in_channels}, 1, 1), got {x.shape}"
            )
        logits = x[:, :, 0, 0] @ self.weight.T + self.bias
        return logits.astype(x.dtype, copy=False), x

    def backward(self, saved, upstream):
        x = saved
        if upstream.shape != (x.shape[0], self.classes):
            raise ShapeError(f"Upstream gradient has shape {upstream.shape}.")
        features = x[:, :, 0, 0]
        dx = (upstream @ self.weight)[:, :, None, None]
        return bw.GradPair(
            input_grad=(dx,),
            param_grad=(upstream.T @ features, upstream.sum(axis=0)),
        )

    def output_shape(self, input_shape):
        return (input_shape[0], self.classes)


class Block(Layer):
    """
    A building block: a body of layers and, when the shortcut condition
    holds, an identity shortcut added to the body's output.
    """

    kind = "block"

    def __init__(self, name: str, body: LayerGraph, shortcut: bool, spec: t.Any = None):
        super().__init__(name)
        self.body = body
        self.shortcut = shortcut
        self.spec = spec

    def params(self):
        return self.body.named_params()

    def buffers(self):
        return self.body.named_buffers()

    def set_array(self, name, value):
        self.body.set_array(name, value)

    @property
    def no_decay_names(self) -> set[str]:
        return self.body.no_decay_names()

    def forward(self, x, mode="infer"):
        fx, trace = self.body.forward_trace(x, mode)
        if not self.shortcut:
            return fx, (x, fx, trace)
        return ops.residual_add(x, fx), (x, fx, trace)

    def backward(self, saved, upstream):
        x, fx, trace = saved
        if self.shortcut:
            shortcut_grad, body_upstream = bw.backward_residual_add(
                x, fx, upstream
            ).input_grad
        else:
            shortcut_grad, body_upstream = None, upstream
        dx, grads = self.body.backward(trace, body_upstream)
        if shortcut_grad is not None:
            dx = shortcut_grad + dx
        return bw.GradPair(input_grad=(dx,), param_grad=tuple(grads.values()))

    def output_shape(self, input_shape):
        return self.body.output_shape(input_shape)


class Trace(t.NamedTuple):
    """What a forward sweep saved, one entry per layer."""

    saved: list[t.Any]


class LayerGraph:
    """An ordered chain of layers with a fixed forward and reverse sweep."""

    def __init__(self, layers: t.Iterable[Layer] = ()):
        self.layers: list[Layer] = list(layers)
        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names):
            raise ValueError(f"Layer names must be unique: {names}")

    def __iter__(self) -> t.Iterator[Layer]:
        return iter(self.layers)

    def __len__(self) -> int:
        return len(self.layers)

    def __getitem__(self, name: str) -> Layer:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    def __call__(self, x: Tensor, mode: Mode = "infer") -> Tensor:
        return self.forward_trace(x, mode)[0]

    # Structure ---------------------------------------------------------

    def walk(self, prefix: str = "") -> t.Iterator[tuple[str, Layer]]:
        """Every layer, depth first, with its dotted path. Blocks come first."""
        for layer in self.layers:
            path = f"{prefix}{layer.name}"
            yield path, layer
            if isinstance(layer, Block):
                yield from layer.body.walk(f"{path}.")

    def count_kind(self, kind: LayerKind) -> int:
        return sum(1 for _, layer in self.walk() if layer.kind == kind)

    def blocks(self) -> list[tuple[str, Block]]:
        return [
            (path, layer) for path, layer in self.walk() if isinstance(layer, Block)
        ]

    def named_params(self) -> dict[str, np.ndarray]:
        named = {}
        for layer in self.layers:
            for name, array in layer.params().items():
                named[f"{layer.name}.{name}"] = array
        return named

    def named_buffers(self) -> dict[str, np.ndarray]:
        named = {}
        for layer in self.layers:
            for name, array in layer.buffers().items():
                named[f"{layer.name}.{name}"] = array
        return named

    def no_decay_names(self) -> set[str]:
        names = set()
        for layer in self.layers:
            if isinstance(layer, Block):
                names |= {f"{layer.name}.{n}" for n in layer.no_decay_names}
            else:
                names |= {f"{layer.name}.{n}" for n in layer.no_decay}
        return names

    def set_array(self, name: str, value: np.ndarray):
        layer_name, _, rest = name.partition(".")
        self[layer_name].set_array(rest, value)

    def astype(self, dtype) -> LayerGraph:
        """Cast every parameter and buffer in place; returns self."""
        for name, array in {**self.named_params(), **self.named_buffers()}.items():
            self.set_array(name, array.astype(dtype))
        return self

    def output_shape(self, input_shape: Shape) -> Shape:
        shape = tuple(input_shape)
        for layer in self.layers:
            shape = layer.output_shape(shape)
        return shape

    def layer_shapes(self, input_shape: Shape) -> list[tuple[str, Layer, Shape, Shape]]:
        """(path, layer, input shape, output shape) for every leaf layer."""
        rows = []
        shape = tuple(input_shape)
        for layer in self.layers:
            if isinstance(layer, Block):
                for path, leaf, in_shape, out_shape in layer.body.layer_shapes(shape):
                    rows.append((f"{layer.name}.{path}", leaf, in_shape, out_shape))
            else:
                rows.append((layer.name, layer, shape, layer.output_shape(shape)))
            shape = layer.output_shape(shape)
        return rows

    # Sweeps ------------------------------------------------------------

    def forward_trace(self, x: Tensor, mode: Mode = "infer") -> tuple[Tensor, Trace]:
        saved = []
        for layer in self.layers:
            x, s = layer.forward(x, mode)
            saved.append(s)
        return x, Trace(saved)

    def backward(
        self, trace: Trace, upstream: Tensor
    ) -> tuple[Tensor, dict[str, np.ndarray]]:
        """Reverse sweep: returns dE/dx and dE/dparam for every named param."""
        grads: dict[str, np.ndarray] = {}
        for layer, saved in zip(reversed(self.layers), reversed(trace.saved)):
            pair = layer.backward(saved, upstream)
            for name, grad in zip(layer.params(), pair.param_grad):
                grads[f"{layer.name}.{name}"] = grad
            (upstream,) = pair.input_grad
        # Keep the same order as named_params().
        return upstream, {name: grads[name] for name in self.named_params()}
