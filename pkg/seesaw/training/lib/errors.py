class TrainingError(Exception):
    pass


class DatasetFormatError(TrainingError):
    """A dataset file does not follow the expected binary layout."""


class NonFiniteGradientError(TrainingError):
    """An optimizer step was rejected because a gradient was NaN or infinite."""


class NonFiniteLossError(TrainingError):
    pass
