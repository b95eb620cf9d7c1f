import numpy as np
from django.test import SimpleTestCase

from seesaw.nn.lib.errors import WeightFormatError, WeightShapeError
from seesaw.nn.lib.model import build_model, make_model_spec
from seesaw.nn.lib.weights import (
    MAGIC,
    deserialize_weights,
    load_weights,
    model_arrays,
    read_container,
    serialize_weights,
    write_container,
)


def _small_spec(**kwargs):
    return make_model_spec(
        "seesaw-shuffle",
        "0.5D",
        num_classes=10,
        input_layout="cifar_32",
        width_multiplier=kwargs.pop("width_multiplier", 0.25),
        **kwargs,
    )


class ContainerTestCase(SimpleTestCase):
    def test_header(self):
        data = write_container({}, spec_hash=7)
        self.assertTrue(data.startswith(MAGIC))
        self.assertEqual(read_container(data).spec_hash, 7)

    def test_all_dtypes(self):
        arrays = {
            "a": np.arange(6, dtype=np.float32).reshape(2, 3),
            "b": np.array([1.5, -2.5]),
            "epoch": np.array([12], dtype=np.int64),
            "scalar": np.array(3.0),
        }
        restored = read_container(write_container(arrays)).arrays
        self.assertEqual(list(restored), list(arrays))
        for name, array in arrays.items():
            self.assertEqual(restored[name].dtype, array.dtype)
            np.testing.assert_array_equal(restored[name], array)

    def test_unsupported_dtype(self):
        with self.assertRaises(WeightFormatError):
            write_container({"x": np.zeros(2, dtype=np.int16)})

    def test_bad_magic(self):
        data = b"XXXX" + write_container({"a": np.zeros(2)})[4:]
        with self.assertRaises(WeightFormatError):
            read_container(data)

    def test_bad_version(self):
        data = bytearray(write_container({}))
        data[4] = 9
        with self.assertRaises(WeightFormatError):
            read_container(bytes(data))

    def test_truncated(self):
        data = write_container({"a": np.ones((4, 4))})
        for cut in (3, 20, len(data) - 1):
            with self.assertRaises(WeightFormatError):
                read_container(data[:cut])

    def test_partial_trailing_record(self):
        with self.assertRaises(WeightFormatError):
            read_container(write_container({}) + b"\x00")

    def test_header_is_magic_version_and_hash(self):
        spec_hash = 0x0102030405060708
        data = write_container({"w": np.zeros(3, dtype="<f4")}, spec_hash)
        self.assertEqual(data[:4], b"SSWN")
        self.assertEqual(data[4:8], (1).to_bytes(4, "little"))
        self.assertEqual(data[8:16], spec_hash.to_bytes(8, "little"))
        # The first record starts right after the hash.
        self.assertEqual(data[16:20], (1).to_bytes(4, "little"))
        self.assertEqual(data[20:21], b"w")
        self.assertEqual(len(data), 16 + 4 + 1 + 2 + 4 + 3 * 4)
        self.assertEqual(read_container(data[:16]).arrays, {})

    def test_duplicate_record(self):
        record = write_container({"w": np.zeros(2)})[16:]
        with self.assertRaises(WeightFormatError):
            read_container(write_container({"w": np.zeros(2)}) + record)


class ModelWeightsTestCase(SimpleTestCase):
    def test_round_trip_is_bit_identical(self):
        spec = _small_spec()
        model = build_model(spec, seed=5)
        channels = model_arrays(model)["stem_bn.running_mean"].size
        model.set_array(
            "stem_bn.running_mean",
            np.linspace(-1, 1, channels).astype(np.float32),
        )
        restored = deserialize_weights(serialize_weights(model, spec), spec)
        original = model_arrays(model)
        for name, array in model_arrays(restored).items():
            self.assertEqual(array.dtype, original[name].dtype)
            self.assertEqual(array.tobytes(), original[name].tobytes(), name)
        x = np.random.default_rng(0).normal(size=spec.input_shape(2))
        x = x.astype(np.float32)
        np.testing.assert_array_equal(model(x), restored(x))

    def test_width_mismatch(self):
        data = serialize_weights(build_model(_small_spec()), _small_spec())
        wider = _small_spec(width_multiplier=0.5)
        with self.assertRaises(WeightShapeError):
            deserialize_weights(data, wider)

    def test_missing_and_unknown(self):
        model = build_model(_small_spec())
        arrays = model_arrays(model)
        missing = dict(arrays)
        missing.pop("classifier.bias")
        with self.assertRaises(WeightShapeError):
            load_weights(model, missing)
        extra = {**arrays, "velocity.classifier.bias": np.zeros(10)}
        with self.assertRaises(WeightShapeError):
            load_weights(model, extra)
        load_weights(model, extra, strict=False)

    def test_hash_mismatch_warns(self):
        spec = _small_spec()
        data = serialize_weights(build_model(spec), spec)
        other = _small_spec(permute=False)
        with self.assertLogs("seesaw.nn.lib.weights", level="WARNING"):
            deserialize_weights(data, other)
