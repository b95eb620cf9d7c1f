from fractions import Fraction

import numpy as np
from django.test import SimpleTestCase

from seesaw.nn.lib.errors import PartitionError, PermutationError
from seesaw.nn.lib.partition import (
    ChannelPartition,
    check_permutation,
    default_share_width,
    group_input_indices,
    inverse_permutation,
    make_partition,
    make_seesaw_permutation,
    shuffle_permutation,
)


def _satisfies_proportional_contract(
    perm: np.ndarray, source: ChannelPartition, dest: ChannelPartition
) -> bool:
    """Every destination group holds floor/ceil of its fair share per source."""
    for dest_slice in dest.slices():
        drawn = [source.group_of(int(c)) for c in perm[dest_slice]]
        size = dest_slice.stop - dest_slice.start
        for group, source_size in enumerate(source):
            fair = Fraction(size * source_size, source.total)
            count = drawn.count(group)
            if count < int(fair) or count > -(-fair.numerator // fair.denominator):
                return False
    return True


class MakePartitionTestCase(SimpleTestCase):
    def test_exact_ratio(self):
        self.assertEqual(make_partition(96, [1, 2]).sizes, (32, 64))

    def test_even(self):
        partition = make_partition(8, [1, 1])
        self.assertEqual(partition.sizes, (4, 4))
        self.assertTrue(partition.is_even)

    def test_largest_remainder(self):
        self.assertEqual(make_partition(10, [1, 2]).sizes, (3, 7))
        self.assertEqual(make_partition(16, [1, 2]).sizes, (5, 11))
        self.assertEqual(make_partition(32, [1, 2]).sizes, (11, 21))

    def test_sums_exactly(self):
        for channels in range(3, 60):
            for ratio in ([1, 2], [1, 1, 1], [2, 3, 5], [1, 1, 1, 1]):
                if channels < len(ratio):
                    continue
                self.assertEqual(make_partition(channels, ratio).total, channels)

    def test_too_few_channels(self):
        with self.assertRaises(PartitionError):
            make_partition(1, [1, 2])

    def test_bad_ratio(self):
        with self.assertRaises(PartitionError):
            make_partition(6, [1, 0])

    def test_slices_and_groups(self):
        partition = ChannelPartition.of([2, 4])
        self.assertEqual(partition.offsets, (0, 2))
        self.assertEqual(partition.slices(), [slice(0, 2), slice(2, 6)])
        self.assertEqual(partition.group_of(1), 0)
        self.assertEqual(partition.group_of(2), 1)
        with self.assertRaises(PartitionError):
            partition.group_of(6)

    def test_empty_group_rejected(self):
        with self.assertRaises(PartitionError):
            ChannelPartition((2, 0))


class GroupInputIndicesTestCase(SimpleTestCase):
    def test_no_share(self):
        indices = group_input_indices(ChannelPartition.of([2, 4]))
        self.assertEqual([list(i) for i in indices], [[0, 1], [2, 3, 4, 5]])

    def test_share_wraps_around(self):
        indices = group_input_indices(ChannelPartition.of([2, 4]), share_width=1)
        self.assertEqual([list(i) for i in indices], [[0, 1, 2], [2, 3, 4, 5, 0]])

    def test_share_too_wide(self):
        with self.assertRaises(PartitionError):
            group_input_indices(ChannelPartition.of([2, 4]), share_width=2)

    def test_default_share_width(self):
        self.assertEqual(default_share_width(ChannelPartition.of([2, 4])), 1)
        self.assertEqual(default_share_width(ChannelPartition.of([32, 64])), 4)
        self.assertEqual(default_share_width(ChannelPartition.of([11, 21])), 2)


class PermutationTestCase(SimpleTestCase):
    def test_even_case_is_channel_shuffle(self):
        partition = ChannelPartition.of([2, 2])
        perm = make_seesaw_permutation(partition, partition)
        self.assertEqual(list(perm), [0, 2, 1, 3])
        self.assertEqual(list(shuffle_permutation(4, 2)), [0, 2, 1, 3])
        self.assertEqual(list(shuffle_permutation(6, 3)), [0, 2, 4, 1, 3, 5])

    def test_uneven_case(self):
        partition = ChannelPartition.of([2, 4])
        perm = make_seesaw_permutation(partition, partition)
        self.assertEqual(list(perm), [2, 0, 3, 4, 1, 5])

    def test_every_destination_sees_every_source(self):
        partition = ChannelPartition.of([2, 4])
        perm = make_seesaw_permutation(partition, partition)
        for dest in partition.slices():
            sources = {partition.group_of(int(c)) for c in perm[dest]}
            self.assertEqual(sources, {0, 1})

    def test_proportional_contract(self):
        for sizes in ([2, 4], [3, 7], [32, 64], [12, 24], [5, 11], [4, 4, 4]):
            partition = ChannelPartition.of(sizes)
            perm = make_seesaw_permutation(partition, partition)
            self.assertEqual(sorted(perm), list(range(partition.total)))
            self.assertTrue(
                _satisfies_proportional_contract(perm, partition, partition), sizes
            )

    def test_total_mismatch(self):
        with self.assertRaises(PartitionError):
            make_seesaw_permutation(
                ChannelPartition.of([2, 4]), ChannelPartition.of([3])
            )

    def test_check_permutation(self):
        check_permutation([2, 0, 1])
        with self.assertRaises(PermutationError):
            check_permutation([0, 0, 1])
        with self.assertRaises(PermutationError):
            check_permutation([0, 1], channels=3)

    def test_inverse(self):
        perm = np.array([2, 0, 3, 4, 1, 5])
        inverse = inverse_permutation(perm)
        np.testing.assert_array_equal(perm[inverse], np.arange(6))
        np.testing.assert_array_equal(inverse[perm], np.arange(6))
