import numpy as np
from django.test import SimpleTestCase

from seesaw.training.lib import (
    PAD,
    augment,
    augment_batch,
    crop_and_flip,
    draw_augmentation,
    normalize,
)


class CropAndFlipTestCase(SimpleTestCase):
    def setUp(self):
        rng = np.random.default_rng(0)
        self.image = rng.integers(1, 256, size=(3, 32, 32), dtype=np.uint8)

    def test_center_offset_is_identity(self):
        np.testing.assert_array_equal(
            crop_and_flip(self.image, (PAD, PAD), False), self.image
        )

    def test_double_flip_is_identity(self):
        once = crop_and_flip(self.image, (PAD, PAD), True)
        np.testing.assert_array_equal(once[:, :, ::-1], self.image)
        twice = crop_and_flip(once, (PAD, PAD), True)
        np.testing.assert_array_equal(twice, self.image)

    def test_corner_offset_exposes_padding(self):
        crop = crop_and_flip(self.image, (0, 0), False)
        self.assertTrue((crop[:, :PAD, :] == 0).all())
        self.assertTrue((crop[:, :, :PAD] == 0).all())
        np.testing.assert_array_equal(crop[:, PAD:, PAD:], self.image[:, :-PAD, :-PAD])

    def test_offset_bounds(self):
        with self.assertRaises(ValueError):
            crop_and_flip(self.image, (2 * PAD + 1, 0), False)


class AugmentTestCase(SimpleTestCase):
    def test_draws(self):
        rng = np.random.default_rng(1)
        draws = [draw_augmentation(rng) for _ in range(200)]
        offsets = {offset for offset, _ in draws}
        for dy, dx in offsets:
            self.assertTrue(0 <= dy <= 2 * PAD and 0 <= dx <= 2 * PAD)
        self.assertEqual({flip for _, flip in draws}, {True, False})
        no_flip = [draw_augmentation(rng, flip=False)[1] for _ in range(20)]
        self.assertFalse(any(no_flip))

    def test_normalize(self):
        images = np.full((1, 3, 2, 2), 255, dtype=np.uint8)
        x = normalize(images, [0.5, 0.5, 0.5], [0.25, 0.5, 1.0])
        np.testing.assert_allclose(x[0, :, 0, 0], [2.0, 1.0, 0.5])

    def test_augment_preserves_shape(self):
        image = np.zeros((3, 32, 32), dtype=np.uint8)
        view = augment(image, np.random.default_rng(0), np.zeros(3), np.ones(3))
        self.assertEqual(view.shape, (3, 32, 32))
        self.assertEqual(view.dtype, np.float32)

    def test_batch_is_reproducible(self):
        images = np.random.default_rng(2).integers(0, 256, (5, 3, 32, 32), np.uint8)
        mean, std = np.full(3, 0.5), np.full(3, 0.25)
        first = augment_batch(images, np.random.default_rng(9), mean, std)
        second = augment_batch(images, np.random.default_rng(9), mean, std)
        np.testing.assert_array_equal(first, second)
