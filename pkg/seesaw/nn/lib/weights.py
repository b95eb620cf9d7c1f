"""
The SSWN weight container.

Layout (little-endian):

    magic "SSWN" | version u32 | spec hash u64
    per record: name length u32 | name (utf-8) | dtype tag u8 | rank u8
                | dims u32 * rank | raw values

Records run to the end of the stream. Model parameters and batch-norm
running statistics are stored by their dotted names. Checkpoints add
further records under their own names.
"""
from __future__ import annotations

import logging
import struct
import typing as t
from dataclasses import dataclass, field

import numpy as np

from .errors import WeightFormatError, WeightShapeError
from .layers import LayerGraph
from .model import ModelSpec, build_model

logger = logging.getLogger(__name__)

MAGIC = b"SSWN"
VERSION = 1

DTYPE_TAGS: dict[int, np.dtype] = {
    0: np.dtype("<f4"),
    1: np.dtype("<f8"),
    2: np.dtype("<i8"),
}
TAG_OF: dict[np.dtype, int] = {dtype: tag for tag, dtype in DTYPE_TAGS.items()}

_HEADER = struct.Struct("<4sIQ")


@dataclass
class WeightFile:
    spec_hash: int
    arrays: dict[str, np.ndarray] = field(default_factory=dict)


def model_arrays(model: LayerGraph) -> dict[str, np.ndarray]:
    """Every parameter and buffer of `model`, by dotted name."""
    return {**model.named_params(), **model.named_buffers()}


def write_container(arrays: t.Mapping[str, np.ndarray], spec_hash: int = 0) -> bytes:
    chunks = [_HEADER.pack(MAGIC, VERSION, spec_hash)]
    for name, array in arrays.items():
        array = np.asarray(array)
        dtype = array.dtype.newbyteorder("<")
        if dtype not in TAG_OF:
            raise WeightFormatError(f"{name}: cannot store dtype {array.dtype}.")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<BB", TAG_OF[dtype], array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype=dtype).tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.offset = 0

    def take(self, size: int) -> memoryview:
        if self.offset + size > len(self.data):
            raise WeightFormatError("Weight stream is truncated.")
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_container(data: bytes) -> WeightFile:
    reader = _Reader(data)
    magic, version, spec_hash = _HEADER.unpack(reader.take(_HEADER.size))
    if magic != MAGIC:
        raise WeightFormatError(f"Not a weight file (magic {bytes(magic)!r}).")
    if version != VERSION:
        raise WeightFormatError(
            f"Weight file version {version} is not supported (expected {VERSION})."
        )
    weights = WeightFile(spec_hash=spec_hash)
    while reader.offset < len(reader.data):
        (length,) = reader.unpack("<I")
        try:
            name = bytes(reader.take(length)).decode("utf-8")
        except UnicodeDecodeError as e:
            raise WeightFormatError("Corrupted record name.") from e
        if name in weights.arrays:
            raise WeightFormatError(f"Duplicate record {name}.")
        tag, rank = reader.unpack("<BB")
        if tag not in DTYPE_TAGS:
            raise WeightFormatError(f"{name}: unknown dtype tag {tag}.")
        shape = reader.unpack(f"<{rank}I")
        dtype = DTYPE_TAGS[tag]
        size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        raw = reader.take(size)
        values = np.frombuffer(raw, dtype=dtype).reshape(shape)
        weights.arrays[name] = values.astype(dtype.newbyteorder("="))
    return weights


def serialize_weights(model: LayerGraph, spec: ModelSpec | None = None) -> bytes:
    return write_container(model_arrays(model), spec.spec_hash() if spec else 0)


def load_weights(
    model: LayerGraph, arrays: t.Mapping[str, np.ndarray], strict: bool = True
):
    """
    Copy `arrays` into `model`. Every model array must be present with the
    same shape; with `strict`, unknown names are errors as well.
    """
    expected = model_arrays(model)
    missing = sorted(set(expected) - set(arrays))
    if missing:
        raise WeightShapeError(f"Missing weights: {', '.join(missing[:5])}")
    unknown = sorted(set(arrays) - set(expected))
    if strict and unknown:
        raise WeightShapeError(f"Unexpected weights: {', '.join(unknown[:5])}")
    for name, current in expected.items():
        value = arrays[name]
        if value.shape != current.shape:
            raise WeightShapeError(
                f"{name} has shape {value.shape}, the model expects {current.shape}."
            )
    for name, current in expected.items():
        model.set_array(name, arrays[name].astype(current.dtype, copy=True))


def model_from_weights(
    weights: WeightFile, spec: ModelSpec, strict: bool = True
) -> LayerGraph:
    """Build the model for `spec` and fill it from decoded `weights`."""
    if weights.spec_hash and weights.spec_hash != spec.spec_hash():
        logger.warning(
            "Weight file was written for a different model description "
            "(hash %016x, expected %016x).",
            weights.spec_hash,
            spec.spec_hash(),
        )
    model = build_model(spec)
    load_weights(model, weights.arrays, strict)
    return model


def deserialize_weights(data: bytes, spec: ModelSpec) -> LayerGraph:
    return model_from_weights(read_container(data), spec)
