import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from seesaw.training.lib import (
    DatasetFormatError,
    decode_records,
    encode_records,
    load_cifar,
)

from .fixtures import color_images, write_cifar10


class RecordTestCase(SimpleTestCase):
    def test_plane_layout(self):
        record = bytearray(3073)
        record[0] = 7
        record[1] = 11  # red (0, 0)
        record[1 + 1024 + 32] = 22  # green (1, 0)
        record[1 + 2048 + 5] = 33  # blue (0, 5)
        images, labels = decode_records(bytes(record))
        self.assertEqual(labels.tolist(), [7])
        self.assertEqual(images[0, 0, 0, 0], 11)
        self.assertEqual(images[0, 1, 1, 0], 22)
        self.assertEqual(images[0, 2, 0, 5], 33)

    def test_round_trip(self):
        images, labels = color_images(3, 10)
        decoded, decoded_labels = decode_records(encode_records(images, labels))
        np.testing.assert_array_equal(decoded, images)
        np.testing.assert_array_equal(decoded_labels, labels)

    def test_cifar100_uses_fine_label(self):
        record = bytearray(3074)
        record[0], record[1] = 3, 87
        _, labels = decode_records(bytes(record), "cifar100")
        self.assertEqual(labels.tolist(), [87])

    def test_truncated(self):
        data = encode_records(*color_images(2, 10))
        with self.assertRaises(DatasetFormatError):
            decode_records(data[:-1])

    def test_label_out_of_range(self):
        record = bytearray(3073)
        record[0] = 10
        with self.assertRaises(DatasetFormatError):
            decode_records(bytes(record))


class LoadCifarTestCase(SimpleTestCase):
    def setUp(self):
        self.directory = Path(tempfile.mkdtemp())
        write_cifar10(self.directory, train_count=40, test_count=20)

    def test_load_splits(self):
        train = load_cifar(self.directory, "train")
        test = load_cifar(self.directory, "test")
        self.assertEqual((len(train), len(test)), (40, 20))
        self.assertEqual(train.num_classes, 10)
        self.assertEqual(train.images.shape, (40, 3, 32, 32))
        self.assertEqual(train.mean.shape, (3,))

    def test_first_record(self):
        images, labels = color_images(8, 10, seed=0)
        train = load_cifar(self.directory, "train")
        np.testing.assert_array_equal(train.images[0], images[0])
        self.assertEqual(train.labels[0], labels[0])

    def test_limit(self):
        self.assertEqual(len(load_cifar(self.directory, "train", limit=12)), 12)

    def test_missing_directory(self):
        with self.assertRaises(DatasetFormatError):
            load_cifar(self.directory / "nope", "train")

    def test_missing_file(self):
        (self.directory / "data_batch_3.bin").unlink()
        with self.assertRaises(DatasetFormatError):
            load_cifar(self.directory, "train")

    def test_batch_normalizes(self):
        train = load_cifar(self.directory, "train")
        x, y = train.batch(np.arange(40))
        self.assertEqual(x.dtype, np.float32)
        np.testing.assert_allclose(x.mean(axis=(0, 2, 3)), 0.0, atol=1e-4)
        np.testing.assert_allclose(x.std(axis=(0, 2, 3)), 1.0, atol=1e-4)
        np.testing.assert_array_equal(y, train.labels)

    def test_augmented_batch_keeps_shape_and_labels(self):
        train = load_cifar(self.directory, "train")
        indices = np.array([3, 1, 4])
        x, y = train.batch(indices, np.random.default_rng(0))
        self.assertEqual(x.shape, (3, 3, 32, 32))
        np.testing.assert_array_equal(y, train.labels[indices])
