import bisect

from .config import TrainConfig
from .errors import TrainingError


def lr_at(config: TrainConfig, epoch: int) -> float:
    """The learning rate used throughout `epoch` (counted from 0)."""
    if epoch < 0:
        raise TrainingError(f"Epoch must be >= 0, got {epoch}.")
    match config.schedule:
        case "cifar_step":
            drops = bisect.bisect_right(config.milestones, epoch)
            return config.base_lr * config.step_factor**drops
        case "imagenet_exp":
            return config.base_lr * config.epoch_decay**epoch
        case "constant":
            return config.base_lr
    raise TrainingError(f"Unknown schedule {config.schedule!r}.")
