"""
The training loop.

Batch composition and augmentation draws are a pure function of
(seed, epoch, step): the sample order of an epoch comes from a generator
seeded with (seed, epoch) and each batch's augmentation from one seeded with
(seed, epoch, step). Batches are prepared on a small thread pool ahead of
the compute step; because of the seeding this never changes results, and a
run resumed from a checkpoint continues exactly where the original would
have been.
"""
from __future__ import annotations

import csv
import logging
import typing as t
from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from django.conf import settings

from seesaw.nn.lib import (
    LayerGraph,
    ModelSpec,
    WeightFile,
    model_arrays,
    model_from_weights,
    read_container,
    write_container,
)

from .config import TrainConfig
from .errors import NonFiniteLossError, TrainingError
from .loss import accuracy, softmax_cross_entropy
from .optim import SGD
from .schedule import lr_at

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.sswn"
METRICS_NAME = "metrics.csv"
METRICS_FIELDS = ("epoch", "step", "lr", "loss", "train_acc", "test_acc")

VELOCITY_PREFIX = "velocity."
EXTRA_PREFIXES = (VELOCITY_PREFIX, "train.", "data.")


class Batches(t.Protocol):
    """What the loop needs from a dataset."""

    num_classes: int
    labels: np.ndarray

    def __len__(self) -> int:
        ...

    def batch(
        self,
        indices: np.ndarray,
        rng: np.random.Generator | None = None,
        flip: bool = True,
    ) -> tuple[np.ndarray, np.ndarray]:
        ...


@dataclass(frozen=True)
class StepMetrics:
    epoch: int
    step: int
    lr: float
    loss: float
    train_acc: float
    test_acc: float | None = None

    def as_row(self) -> dict[str, t.Any]:
        row = {name: getattr(self, name) for name in METRICS_FIELDS}
        row["test_acc"] = "" if self.test_acc is None else self.test_acc
        return row


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    lr: float
    loss: float
    train_acc: float
    test_acc: float | None
    steps: list[StepMetrics] = field(default_factory=list)

    def summary(self) -> str:
        test = "n/a" if self.test_acc is None else f"{self.test_acc:.4f}"
        return (
            f"epoch={self.epoch} loss={self.loss:.4f} "
            f"train_acc={self.train_acc:.4f} test_acc={test}"
        )


def epoch_order(seed: int, epoch: int, count: int) -> np.ndarray:
    return np.random.default_rng((seed, epoch)).permutation(count)


def step_rng(seed: int, epoch: int, step: int) -> np.random.Generator:
    return np.random.default_rng((seed, epoch, step))


def evaluate(model: LayerGraph, dataset: Batches, batch_size: int = 250) -> float:
    """Top-1 accuracy over the whole dataset, in infer mode."""
    if len(dataset) == 0:
        raise TrainingError("Cannot evaluate on an empty dataset.")
    correct = 0
    for start in range(0, len(dataset), batch_size):
        indices = np.arange(start, min(start + batch_size, len(dataset)))
        x, y = dataset.batch(indices)
        logits = model(x, "infer")
        correct += int((logits.argmax(axis=1) == y).sum())
    return correct / len(dataset)


# -----------------------------------------------------------------------------
# Checkpoints
# -----------------------------------------------------------------------------


@dataclass
class Checkpoint:
    model: LayerGraph
    velocity: dict[str, np.ndarray]
    epoch: int
    """Number of completed epochs."""
    step: int
    mean: np.ndarray | None = None
    std: np.ndarray | None = None


def save_checkpoint(
    path: Path,
    model: LayerGraph,
    spec: ModelSpec | None,
    velocity: t.Mapping[str, np.ndarray],
    epoch: int,
    step: int,
    mean: np.ndarray | None = None,
    std: np.ndarray | None = None,
):
    """Write model weights, SGD velocity and counters in one weight container."""
    arrays = dict(model_arrays(model))
    arrays |= {f"{VELOCITY_PREFIX}{name}": v for name, v in velocity.items()}
    arrays["train.epoch"] = np.array([epoch], dtype=np.int64)
    arrays["train.step"] = np.array([step], dtype=np.int64)
    if mean is not None and std is not None:
        arrays["data.mean"] = np.asarray(mean, dtype=np.float64)
        arrays["data.std"] = np.asarray(std, dtype=np.float64)
    data = write_container(arrays, spec.spec_hash() if spec else 0)
    path.parent.mkdir(parents=True, exist_ok=True)
    partial = path.with_suffix(path.suffix + ".partial")
    partial.write_bytes(data)
    partial.replace(path)
    logger.info("wrote checkpoint for epoch %d to %s", epoch, path)


def load_checkpoint(path: Path, spec: ModelSpec) -> Checkpoint:
    weights = read_container(Path(path).read_bytes())
    model_part = {
        name: array
        for name, array in weights.arrays.items()
        if not name.startswith(EXTRA_PREFIXES)
    }
    model = model_from_weights(WeightFile(weights.spec_hash, model_part), spec)
    arrays = weights.arrays
    velocity = {
        name.removeprefix(VELOCITY_PREFIX): array
        for name, array in arrays.items()
        if name.startswith(VELOCITY_PREFIX)
    }
    return Checkpoint(
        model=model,
        velocity=velocity,
        epoch=int(arrays["train.epoch"][0]) if "train.epoch" in arrays else 0,
        step=int(arrays["train.step"][0]) if "train.step" in arrays else 0,
        mean=arrays.get("data.mean"),
        std=arrays.get("data.std"),
    )


# -----------------------------------------------------------------------------
# Trainer
# -----------------------------------------------------------------------------


class Trainer:
    """Runs SGD epochs over one dataset and owns the model while it does."""

    def __init__(
        self,
        model: LayerGraph,
        train: Batches,
        config: TrainConfig,
        *,
        test: Batches | None = None,
        spec: ModelSpec | None = None,
        output_dir: Path | None = None,
        threads: int | None = None,
        start_epoch: int = 0,
        step: int = 0,
        velocity: dict[str, np.ndarray] | None = None,
    ):
        if len(train) == 0:
            raise TrainingError("The training set is empty.")
        if spec is not None and spec.num_classes != train.num_classes:
            raise TrainingError(
                f"The model predicts {spec.num_classes} classes, "
                f"the dataset has {train.num_classes}."
            )
        self.model = model
        self.train = train
        self.test = test
        self.config = config
        self.spec = spec
        self.output_dir = output_dir
        self.threads = max(1, threads or settings.SEESAW_THREADS)
        self.epoch = start_epoch
        self.step = step
        self.optimizer = SGD(config.momentum, config.weight_decay, velocity or {})

    @classmethod
    def resume(
        cls,
        checkpoint: Path,
        spec: ModelSpec,
        train: Batches,
        config: TrainConfig,
        **kwargs: t.Any,
    ) -> Trainer:
        state = load_checkpoint(checkpoint, spec)
        logger.info("resuming from %s after epoch %d", checkpoint, state.epoch)
        return cls(
            state.model,
            train,
            config,
            spec=spec,
            start_epoch=state.epoch,
            step=state.step,
            velocity=state.velocity,
            **kwargs,
        )

    @property
    def batch_size(self) -> int:
        return min(self.config.batch_size, len(self.train))

    @property
    def steps_per_epoch(self) -> int:
        return self.config.steps_per_epoch or len(self.train) // self.batch_size

    def prepare(
        self, epoch: int, order: np.ndarray, step: int
    ) -> tuple[np.ndarray, np.ndarray]:
        """The inputs and labels of one step; depends only on its arguments."""
        positions = step * self.batch_size + np.arange(self.batch_size)
        indices = order[positions % len(order)]
        rng = step_rng(self.config.seed, epoch, step) if self.config.augment else None
        return self.train.batch(indices, rng, self.config.flip)

    def train_step(
        self, x: np.ndarray, y: np.ndarray, lr: float
    ) -> tuple[float, float]:
        logits, trace = self.model.forward_trace(x, "train")
        loss, dlogits = softmax_cross_entropy(logits, y)
        if not np.isfinite(loss):
            logger.error("non-finite loss at epoch %d step %d", self.epoch, self.step)
            raise NonFiniteLossError(
                f"Loss became {loss} at epoch {self.epoch}, step {self.step} "
                f"(lr={lr:g}); try a smaller learning rate."
            )
        _, grads = self.model.backward(trace, dlogits)
        self.optimizer.step(self.model, grads, lr)
        return loss, accuracy(logits, y)

    def run_epoch(self) -> EpochMetrics:
        epoch = self.epoch
        lr = lr_at(self.config, epoch)
        order = epoch_order(self.config.seed, epoch, len(self.train))
        steps = self.steps_per_epoch
        records: list[StepMetrics] = []
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            pending: deque[Future] = deque()
            queued = 0
            for step in range(steps):
                while queued < steps and len(pending) <= self.threads:
                    pending.append(pool.submit(self.prepare, epoch, order, queued))
                    queued += 1
                x, y = pending.popleft().result()
                loss, acc = self.train_step(x, y, lr)
                records.append(StepMetrics(epoch, self.step, lr, loss, acc))
                logger.debug(
                    "epoch %d step %d lr %.5f loss %.4f acc %.3f",
                    epoch,
                    self.step,
                    lr,
                    loss,
                    acc,
                )
                self.step += 1
        test_acc = evaluate(self.model, self.test) if self.test is not None else None
        if test_acc is not None:
            last = records[-1]
            records[-1] = StepMetrics(
                last.epoch, last.step, last.lr, last.loss, last.train_acc, test_acc
            )
        self.epoch += 1
        return EpochMetrics(
            epoch=epoch,
            lr=lr,
            loss=float(np.mean([r.loss for r in records])),
            train_acc=float(np.mean([r.train_acc for r in records])),
            test_acc=test_acc,
            steps=records,
        )

    def _record(self, metrics: EpochMetrics):
        if self.output_dir is None:
            return
        path = self.output_dir / METRICS_NAME
        fresh = not path.exists()
        self.output_dir.mkdir(parents=True, exist_ok=True)
        with path.open("a", newline="") as stream:
            writer = csv.DictWriter(stream, fieldnames=METRICS_FIELDS)
            if fresh:
                writer.writeheader()
            for record in metrics.steps:
                writer.writerow(record.as_row())
        save_checkpoint(
            self.output_dir / CHECKPOINT_NAME,
            self.model,
            self.spec,
            self.optimizer.velocity,
            self.epoch,
            self.step,
            getattr(self.train, "mean", None),
            getattr(self.train, "std", None),
        )

    def epochs(self) -> t.Iterator[EpochMetrics]:
        """Run the remaining epochs, yielding each one's metrics."""
        while self.epoch < self.config.total_epochs:
            metrics = self.run_epoch()
            self._record(metrics)
            logger.info(metrics.summary())
            yield metrics


def train_loop(
    model: LayerGraph, dataset: Batches, config: TrainConfig, **kwargs: t.Any
) -> t.Iterator[EpochMetrics]:
    """Train `model` on `dataset`; see `Trainer` for the keyword arguments."""
    return Trainer(model, dataset, config, **kwargs).epochs()
