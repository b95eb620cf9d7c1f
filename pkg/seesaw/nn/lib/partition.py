"""
Channel partitions and the permutations that move channels between them.

A `ChannelPartition` splits C channels into contiguous groups. Even grouping
(every group the same size) is the special case; "seesaw" grouping uses
unequal sizes, by default two groups in a 1:2 ratio.
"""
from __future__ import annotations

import typing as t
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import PartitionError, PermutationError

DEFAULT_RATIO: tuple[int, ...] = (1, 2)
"""The default uneven split: two groups, the second twice as wide."""

EVEN_RATIO: tuple[int, ...] = (1, 1)


@dataclass(frozen=True)
class ChannelPartition:
    """An ordered list of positive group sizes."""

    sizes: tuple[int, ...]

    def __post_init__(self):
        if not self.sizes:
            raise PartitionError("A partition needs at least one group.")
        if any(size < 1 for size in self.sizes):
            raise PartitionError(f"Group sizes must be positive: {self.sizes}")

    @classmethod
    def of(cls, sizes: t.Iterable[int]) -> ChannelPartition:
        return cls(tuple(int(size) for size in sizes))

    def __len__(self) -> int:
        return len(self.sizes)

    def __iter__(self) -> t.Iterator[int]:
        return iter(self.sizes)

    def __getitem__(self, index: int) -> int:
        return self.sizes[index]

    @property
    def total(self) -> int:
        return sum(self.sizes)

    @property
    def is_even(self) -> bool:
        return len(set(self.sizes)) == 1

    @property
    def offsets(self) -> tuple[int, ...]:
        """Index of the first channel of each group."""
        offsets = np.concatenate([[0], np.cumsum(self.sizes)[:-1]])
        return tuple(int(o) for o in offsets)

    def slices(self) -> list[slice]:
        return [
            slice(offset, offset + size)
            for offset, size in zip(self.offsets, self.sizes)
        ]

    def group_of(self, channel: int) -> int:
        """The group that owns `channel`."""
        for group, s in enumerate(self.slices()):
            if s.start <= channel < s.stop:
                return group
        raise PartitionError(f"Channel {channel} is outside [0, {self.total}).")

    def check_channels(self, channels: int, what: str = "tensor"):
        if self.total != channels:
            raise PartitionError(
                f"Partition {self.sizes} sums to {self.total}, "
                f"but the {what} has {channels} channels."
            )


def make_partition(channels: int, ratio: t.Sequence[int]) -> ChannelPartition:
    """
    Split `channels` into groups proportional to `ratio`.

    Sizes are rounded with the largest-remainder rule: every group first gets
    the floor of its ideal share, then the leftover channels go one at a time
    to the groups with the largest fractional parts (earlier groups win ties).
    """
    if not ratio or any(r < 1 for r in ratio):
        raise PartitionError(f"Ratio entries must be positive: {tuple(ratio)}")
    if channels < len(ratio):
        raise PartitionError(
            f"Cannot split {channels} channels into {len(ratio)} groups."
        )
    total = sum(ratio)
    ideal = [Fraction(channels * r, total) for r in ratio]
    sizes = [int(share) for share in ideal]
    leftover = channels - sum(sizes)
    by_remainder = sorted(
        range(len(ratio)), key=lambda g: (-(ideal[g] - sizes[g]), g)
    )
    for group in by_remainder[:leftover]:
        sizes[group] += 1
    if 0 in sizes:
        raise PartitionError(
            f"Splitting {channels} channels by {tuple(ratio)} leaves an empty group."
        )
    return ChannelPartition(tuple(sizes))


def group_input_indices(
    partition: ChannelPartition, share_width: int = 0
) -> list[np.ndarray]:
    """
    The input channels each group reads.

    Without sharing, group g reads exactly its own slice. With sharing, it
    also reads the first `share_width` channels of group (g + 1) mod G, so
    adjacent groups overlap and the last group wraps around to the first.
    """
    if share_width < 0:
        raise PartitionError(f"share_width must be >= 0, got {share_width}")
    if share_width and share_width >= min(partition.sizes):
        raise PartitionError(
            f"share_width {share_width} must be smaller than the smallest "
            f"group ({min(partition.sizes)})."
        )
    slices = partition.slices()
    indices = []
    for group, own in enumerate(slices):
        channels = list(range(own.start, own.stop))
        if share_width:
            neighbour = slices[(group + 1) % len(slices)]
            channels += list(range(neighbour.start, neighbour.start + share_width))
        indices.append(np.array(channels, dtype=np.int64))
    return indices


def default_share_width(partition: ChannelPartition) -> int:
    """ceil(0.125 x smallest group), at least 1."""
    return max(1, -(-min(partition.sizes) // 8))


# ---------------------------------------------------------------------
# Permutations
# ---------------------------------------------------------------------


def check_permutation(perm: t.Sequence[int] | np.ndarray, channels: int | None = None):
    """Raise `PermutationError` unless `perm` is a bijection on [0, C)."""
    perm = np.asarray(perm)
    size = len(perm) if channels is None else channels
    if perm.ndim != 1 or len(perm) != size:
        raise PermutationError(f"Expected a permutation of {size} channels.")
    if not np.array_equal(np.sort(perm), np.arange(size)):
        raise PermutationError("Channel map is not a bijection.")


def inverse_permutation(perm: t.Sequence[int] | np.ndarray) -> np.ndarray:
    perm = np.asarray(perm, dtype=np.int64)
    check_permutation(perm)
    inverse = np.empty_like(perm)
    inverse[perm] = np.arange(len(perm))
    return inverse


def make_seesaw_permutation(
    pout_first: ChannelPartition, pin_second: ChannelPartition
) -> np.ndarray:
    """
    Build the channel map between two grouped 1x1 convolutions.

    Output channel i of the permute takes input channel perm[i]. Source
    channels (grouped by `pout_first`) are merged by proportional round-robin:
    the k-th channel of a source group of size a is due at time (k + 1) / a,
    channels are emitted in order of due time, and ties go to the earlier
    source group. The merged order is then cut into the contiguous groups of
    `pin_second`, so every destination group draws from every source group
    in proportion to the source sizes. For even partitions this is the
    classic channel shuffle.
    """
    if pout_first.total != pin_second.total:
        raise PartitionError(
            f"Cannot permute between partitions of {pout_first.total} "
            f"and {pin_second.total} channels."
        )
    due = [
        (Fraction(k + 1, size), group, offset + k)
        for group, (offset, size) in enumerate(
            zip(pout_first.offsets, pout_first.sizes)
        )
        for k in range(size)
    ]
    due.sort(key=lambda item: (item[0], item[1]))
    return np.array([channel for _, _, channel in due], dtype=np.int64)


def shuffle_permutation(channels: int, groups: int) -> np.ndarray:
    """The classic channel shuffle over `groups` equal groups."""
    if channels % groups:
        raise PartitionError(
            f"{channels} channels do not split into {groups} equal groups."
        )
    partition = make_partition(channels, [1] * groups)
    return make_seesaw_permutation(partition, partition)
