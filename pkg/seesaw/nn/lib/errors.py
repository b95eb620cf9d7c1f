class SeesawError(Exception):
    pass


class ShapeError(SeesawError):
    """A tensor or kernel does not have the shape an operation requires."""


class PartitionError(SeesawError):
    """A channel partition does not fit the channels it is meant to split."""


class PermutationError(SeesawError):
    pass


class LayerKindError(SeesawError):
    """A layer kind has no rule for the requested analysis."""


class GradientModeError(SeesawError):
    pass


class SpecError(SeesawError):
    """An architecture description is invalid."""


class WeightFormatError(SeesawError):
    """A weight container is truncated, corrupted, or of another version."""


class WeightShapeError(SeesawError):
    """A weight container does not match the model it is loaded into."""
