import math

import numpy as np
from django.test import SimpleTestCase

from seesaw.nn.lib import ShapeError, build_model
from seesaw.training.lib import accuracy, softmax_cross_entropy

from .fixtures import color_dataset, tiny_spec


class SoftmaxCrossEntropyTestCase(SimpleTestCase):
    def test_uniform_logits(self):
        loss, grad = softmax_cross_entropy(np.zeros((4, 5)), np.arange(4))
        self.assertAlmostEqual(loss, math.log(5))
        np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-15)

    def test_gradient_matches_differences(self):
        rng = np.random.default_rng(0)
        logits = rng.normal(size=(3, 4))
        labels = np.array([0, 3, 1])
        _, grad = softmax_cross_entropy(logits, labels)
        h = 1e-6
        for index in np.ndindex(*logits.shape):
            plus, minus = logits.copy(), logits.copy()
            plus[index] += h
            minus[index] -= h
            numeric = (
                softmax_cross_entropy(plus, labels)[0]
                - softmax_cross_entropy(minus, labels)[0]
            ) / (2 * h)
            self.assertAlmostEqual(grad[index], numeric, places=8)

    def test_large_logits_stay_finite(self):
        loss, grad = softmax_cross_entropy(np.array([[1000.0, 0.0]]), np.array([1]))
        self.assertAlmostEqual(loss, 1000.0)
        self.assertTrue(np.isfinite(grad).all())

    def test_shapes(self):
        with self.assertRaises(ShapeError):
            softmax_cross_entropy(np.zeros((2, 3)), np.zeros(3, dtype=np.int64))

    def test_untrained_model_is_near_chance(self):
        dataset = color_dataset(count=32, num_classes=10)
        model = build_model(tiny_spec(num_classes=10))
        x, y = dataset.batch(np.arange(32))
        loss, _ = softmax_cross_entropy(model(x, "train"), y)
        self.assertLess(abs(loss - math.log(10)) / math.log(10), 0.1)

    def test_accuracy(self):
        logits = np.array([[0.1, 0.9], [0.8, 0.2], [0.3, 0.7]])
        self.assertAlmostEqual(accuracy(logits, np.array([1, 0, 0])), 2 / 3)
