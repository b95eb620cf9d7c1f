import sys
import typing as t
from functools import wraps
from pathlib import Path

import djclick as click
import numpy as np
from django.conf import settings
from pydantic import ValidationError

from seesaw.cli.lib import (
    CONFIG_NAME,
    ConfigError,
    data_dir,
    load_eval_data,
    load_train_data,
    model_spec_for,
    output_dir,
    read_run_config,
)
from seesaw.nn.lib import (
    ARCH_BLOCK_KIND,
    ARCHS,
    DEFAULT_RATIO,
    EVEN_RATIO,
    INPUT_SIZE,
    BlockSpec,
    LayerGraph,
    SeesawError,
    build_block,
    build_model,
    connectivity_by_depth,
    count_model,
    finite_difference_check,
    make_model_spec,
    read_container,
    reference_deviation,
)
from seesaw.training.lib import (
    Trainer,
    TrainingError,
    evaluate,
    load_checkpoint,
)

# -----------------------------------------------------------------------------
# Common parameters
# -----------------------------------------------------------------------------


def _parse_ratio(ctx, param, value: str | None) -> tuple[int, ...] | None:
    if value is None:
        return None
    try:
        ratio = tuple(int(part) for part in value.split(",") if part.strip())
    except ValueError:
        raise click.BadParameter("expected comma separated integers, like 1,2")
    if not ratio or min(ratio) < 1:
        raise click.BadParameter("every group size must be >= 1")
    return ratio


def _library_errors(func):
    """Turn library failures into a one-line error and exit status 1."""

    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (SeesawError, TrainingError, ConfigError) as e:
            raise click.ClickException(str(e)) from e

    return wrapper


def _block_params(func):
    """Define the parameters that describe a single building block."""

    @click.option(
        "--block",
        type=click.Choice(ARCHS),
        required=True,
        help="Architecture whose building block is examined.",
    )
    @click.option("--channels", type=click.IntRange(min=1), default=6)
    @click.option("--expansion", type=click.IntRange(min=1), default=6)
    @click.option(
        "--ratio",
        callback=_parse_ratio,
        default=None,
        help="Group-size ratio, like 1,2. Defaults to the block's own.",
    )
    @click.option("--share-width", type=click.IntRange(min=1), default=None)
    @click.option(
        "--no-permute",
        is_flag=True,
        default=False,
        help="Build the block without its channel permutes.",
    )
    @click.option("--seed", type=int, default=0)
    @wraps(func)
    def wrapper(*args, **kwargs):
        return func(*args, **kwargs)

    return wrapper


def _block_spec(
    block: str,
    channels: int,
    expansion: int,
    ratio: tuple[int, ...] | None,
    share_width: int | None,
    no_permute: bool,
    stride: int = 1,
) -> BlockSpec:
    kind = ARCH_BLOCK_KIND[t.cast(t.Any, block)]
    try:
        return BlockSpec(
            kind=kind,
            in_channels=channels,
            expansion_ratio=expansion,
            out_channels=channels,
            stride=stride,
            ratio=ratio or (EVEN_RATIO if kind == "igcv3" else DEFAULT_RATIO),
            share_width=share_width,
            permute=not no_permute,
        )
    except ValidationError as e:
        raise click.ClickException(str(e)) from e


# -----------------------------------------------------------------------------
# Commands
# -----------------------------------------------------------------------------


@click.group(invoke_without_command=True)
def main():
    """Build, count, check and train seesaw networks."""
    context = click.get_current_context()
    if context.invoked_subcommand is None:
        click.echo(context.get_help())


@main.command()
@click.option("--arch", type=click.Choice(ARCHS), default="seesaw-shuffle")
@click.option(
    "--variant",
    default="1.0D",
    help="0.5D, 1.0D, or 1.0 for the architecture's native depth.",
)
@click.option(
    "--layout",
    type=click.Choice(list(INPUT_SIZE)),
    default="imagenet_224",
    help="Stride layout of the network.",
)
@click.option(
    "--res",
    type=click.IntRange(min=1),
    default=None,
    help="Input resolution; defaults to the layout's own.",
)
@click.option("--width", type=float, default=1.0, help="Width multiplier.")
@click.option(
    "--expansion",
    type=click.IntRange(min=1),
    default=None,
    help="Expansion ratio for every stage but the first.",
)
@click.option("--ratio", callback=_parse_ratio, default=None)
@click.option("--share-width", type=click.IntRange(min=1), default=None)
@click.option("--num-classes", type=click.IntRange(min=1), default=1000)
@click.option("--table/--no-table", default=True, help="Print the per-layer table.")
@click.option(
    "--csv",
    "csv_path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Also write the per-layer rows as CSV.",
)
@_library_errors
def cost(
    arch: str,
    variant: str,
    layout: str,
    res: int | None,
    width: float,
    expansion: int | None,
    ratio: tuple[int, ...] | None,
    share_width: int | None,
    num_classes: int,
    table: bool,
    csv_path: Path | None,
):
    """Count parameters and multiply-adds layer by layer."""
    spec = make_model_spec(
        t.cast(t.Any, arch),
        variant,
        num_classes=num_classes,
        width_multiplier=width,
        input_layout=t.cast(t.Any, layout),
        expansion=expansion,
        ratio=ratio or (EVEN_RATIO if arch == "igcv3" else DEFAULT_RATIO),
        share_width=share_width,
    )
    if settings.VERBOSE:
        print(f">>>> COST: {spec.arch} {spec.depth_variant}", file=sys.stderr)
    report = count_model(build_model(spec), res or spec.input_size)
    if table:
        click.echo(report.to_text())
    if csv_path is not None:
        with csv_path.open("w", newline="") as stream:
            report.write_csv(stream)
    deviation = reference_deviation(spec, report)
    if deviation is not None:
        click.echo(deviation.summary())
    click.echo(report.summary())


@main.command()
@click.argument(
    "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path)
)
@click.option(
    "--resume",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Continue from this checkpoint.",
)
@click.option("--epochs", type=click.IntRange(min=1), default=None)
@click.option("--lr", type=float, default=None, help="Base learning rate.")
@click.option("--batch-size", type=click.IntRange(min=1), default=None)
@click.option("--steps-per-epoch", type=click.IntRange(min=1), default=None)
@click.option("--seed", type=int, default=None, help="Data order and augmentation.")
@click.option(
    "--data", type=click.Path(file_okay=False, path_type=Path), default=None
)
@click.option("--limit", type=click.IntRange(min=1), default=None)
@click.option("--test-limit", type=click.IntRange(min=1), default=None)
@click.option(
    "--output", type=click.Path(file_okay=False, path_type=Path), default=None
)
@click.option("--threads", type=click.IntRange(min=1), default=None)
@_library_errors
def train(
    config_path: Path,
    resume: Path | None,
    epochs: int | None,
    lr: float | None,
    batch_size: int | None,
    steps_per_epoch: int | None,
    seed: int | None,
    data: Path | None,
    limit: int | None,
    test_limit: int | None,
    output: Path | None,
    threads: int | None,
):
    """Train a network as described by a run configuration file."""
    config = read_run_config(
        config_path,
        {
            "train": {
                "total_epochs": epochs,
                "base_lr": lr,
                "batch_size": batch_size,
                "steps_per_epoch": steps_per_epoch,
                "seed": seed,
            },
            "data": {"dir": data, "limit": limit, "test_limit": test_limit},
            "output": {"dir": output},
        },
    )
    out = output_dir(config)
    resolved = {
        "data": config.data.copy(update={"dir": data_dir(config)}),
        "output": config.output.copy(update={"dir": out}),
    }
    config = config.copy(update=resolved)
    train_set, test_set = load_train_data(config)
    spec = model_spec_for(config, train_set.num_classes)
    config.write(out)
    if settings.VERBOSE:
        print(f">>>> TRAIN: writing to {out}", file=sys.stderr)

    kwargs: dict[str, t.Any] = dict(test=test_set, output_dir=out, threads=threads)
    if resume is not None:
        trainer = Trainer.resume(resume, spec, train_set, config.train, **kwargs)
    else:
        model = build_model(spec, seed=config.model.seed)
        trainer = Trainer(model, train_set, config.train, spec=spec, **kwargs)

    last = None
    for metrics in trainer.epochs():
        last = metrics
        if settings.VERBOSE:
            print(f">>>> TRAIN: {metrics.summary()}", file=sys.stderr)
    if last is None:
        raise click.ClickException(
            f"Nothing to do: training already covers {trainer.epoch} epochs."
        )
    click.echo(last.summary())


@main.command(name="eval")
@click.argument(
    "checkpoint", type=click.Path(exists=True, dir_okay=False, path_type=Path)
)
@click.option(
    "--config",
    "config_path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help=f"Run configuration; defaults to {CONFIG_NAME} next to the checkpoint.",
)
@click.option(
    "--data", type=click.Path(file_okay=False, path_type=Path), default=None
)
@click.option("--limit", type=click.IntRange(min=1), default=None)
@_library_errors
def eval_(
    checkpoint: Path, config_path: Path | None, data: Path | None, limit: int | None
):
    """Report top-1 accuracy of a checkpoint on the evaluation split."""
    config = read_run_config(
        config_path or checkpoint.parent / CONFIG_NAME,
        {"data": {"dir": data, "test_limit": limit}},
    )
    arrays = read_container(checkpoint.read_bytes()).arrays
    dataset = load_eval_data(
        config, mean=arrays.get("data.mean"), std=arrays.get("data.std")
    )
    spec = model_spec_for(config, dataset.num_classes)
    state = load_checkpoint(checkpoint, spec)
    if settings.VERBOSE:
        print(f">>>> EVAL: {checkpoint} after epoch {state.epoch}", file=sys.stderr)
    accuracy = evaluate(state.model, dataset)
    click.echo(f"accuracy={accuracy:.4f} samples={len(dataset)} epoch={state.epoch}")


@main.command()
@_block_params
@click.option("--stride", type=click.IntRange(1, 2), default=1)
@click.option("--size", type=click.IntRange(min=1), default=5, help="Input height.")
@click.option("--batch", type=click.IntRange(min=2), default=2)
@click.option("--tolerance", type=float, default=1e-5)
@click.option(
    "--sample",
    type=click.IntRange(min=1),
    default=None,
    help="Check only this many randomly chosen elements.",
)
@_library_errors
def checkgrad(
    block: str,
    channels: int,
    expansion: int,
    ratio: tuple[int, ...] | None,
    share_width: int | None,
    no_permute: bool,
    seed: int,
    stride: int,
    size: int,
    batch: int,
    tolerance: float,
    sample: int | None,
):
    """Compare a block's backward pass with central differences."""
    spec = _block_spec(
        block, channels, expansion, ratio, share_width, no_permute, stride
    )
    rng = np.random.default_rng(seed)
    layer = build_block(spec, rng=rng)
    LayerGraph([layer]).astype(np.float64)
    x = rng.normal(size=(batch, channels, size, size))
    report = finite_difference_check(layer, x, tolerance, sample=sample, rng=rng)
    if settings.VERBOSE:
        for row in report.rows:
            print(
                f">>>> CHECKGRAD: {row.name} checked={row.checked} "
                f"max_rel_err={row.max_rel_error:.3e}",
                file=sys.stderr,
            )
    click.echo(report.summary())
    if not report.passed:
        names = ", ".join(row.name for row in report.failures)
        raise click.ClickException(f"Gradient check failed for {names}.")


@main.command()
@_block_params
@click.option(
    "--stack",
    type=click.IntRange(min=1),
    default=1,
    help="Chain this many identical blocks and report each depth.",
)
@click.option("--matrix/--no-matrix", default=True, help="Print the matrix.")
@_library_errors
def connectivity(
    block: str,
    channels: int,
    expansion: int,
    ratio: tuple[int, ...] | None,
    share_width: int | None,
    no_permute: bool,
    seed: int,
    stack: int,
    matrix: bool,
):
    """Show which input channels reach which output channels of a block."""
    spec = _block_spec(block, channels, expansion, ratio, share_width, no_permute)
    rng = np.random.default_rng(seed)
    blocks = [build_block(spec, name=f"block{i}", rng=rng) for i in range(stack)]
    history = connectivity_by_depth(blocks)
    if stack > 1:
        for depth, step in enumerate(history, start=1):
            click.echo(
                f"depth={depth} density={step.density:.3f} nonzero={step.nonzero}"
            )
    result = history[-1]
    if matrix:
        click.echo(result.render())
    full = "yes" if result.is_full else "no"
    click.echo(
        f"full={full} density={result.density:.3f} nonzero={result.nonzero} "
        f"shape={result.out_channels}x{result.in_channels}"
    )
    if not result.is_full:
        raise click.ClickException("Not every output channel sees every input.")
