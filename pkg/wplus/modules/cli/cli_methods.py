import functools
from pathlib import Path
from typing import Any, Callable

import typer
from dotenv import dotenv_values
from loguru import logger
from pydantic import ValidationError

from wplus.core.exceptions import ImageIOError, InvalidArgumentError, WPlusError
from wplus.modules.cli.cli_schema import InitChoice, RunConfig
from wplus.modules.embedder.embedder_schema import EmbedConfig, InitStrategy, LatentSpace
from wplus.modules.generator.generator_methods import load_checkpoint
from wplus.modules.generator.generator_schema import ExtendedLatent, GeneratorConfig, GeneratorHandle, ImageBuffer
from wplus.modules.perceptual.perceptual_methods import build_feature_extractor, load_extractor
from wplus.modules.perceptual.perceptual_schema import ExtractorConfig, FeatureExtractorHandle, LossWeights
from wplus.utils.imageio import write_png

EXIT_OK = 0
EXIT_BAD_ARGUMENTS = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def load_run_config(path: Path | None) -> dict[str, str]:
    if path is None:
        return {}
    if not Path(path).is_file():
        raise ImageIOError(f"Config file {path} not found")
    values = {key.strip().lower(): value for key, value in dotenv_values(path).items() if value is not None}
    unknown = sorted(set(values) - set(RunConfig.model_fields))
    if unknown:
        raise InvalidArgumentError(f"Unknown keys in config file {path}: {', '.join(unknown)}")
    return values


def resolve_run_config(path: Path | None = None, **flags: Any) -> RunConfig:
    """Command-line flag > config file > built-in default."""
    values: dict[str, Any] = load_run_config(path)
    values.update({key: value for key, value in flags.items() if value is not None})
    try:
        return RunConfig(**values)
    except ValidationError as e:
        raise InvalidArgumentError(f"Invalid run configuration: {e}")


def to_embed_config(run: RunConfig, provided: ExtendedLatent | None = None) -> EmbedConfig:
    init = {
        InitChoice.MEAN: InitStrategy.MEAN,
        InitChoice.RANDOM: InitStrategy.RANDOM,
        InitChoice.FILE: InitStrategy.PROVIDED,
    }[run.init]
    try:
        return EmbedConfig(
            init_strategy=init,
            latent_space=LatentSpace(run.space.value),
            provided=provided,
            steps=run.steps,
            learning_rate=run.lr,
            beta1=run.beta1,
            beta2=run.beta2,
            epsilon=run.epsilon,
            weights=LossWeights(
                lambda_mse=run.lambda_mse,
                lambda_percept=(run.lambda_percept,) * 4,
                loss_resolution=run.loss_resolution,
            ),
            seed=run.seed,
            record_every=run.record_every,
            mean_samples=run.mean_samples,
            mean_seed=run.mean_seed,
            noise_seed=run.noise_seed,
        )
    except ValidationError as e:
        raise InvalidArgumentError(f"Invalid embedding configuration: {e}")


def to_generator_config(run: RunConfig) -> GeneratorConfig:
    try:
        return GeneratorConfig(
            resolution=run.resolution,
            style_dim=run.style_dim,
            mapping_layers=run.mapping_layers,
            base_channels=run.base_channels,
            channel_cap=run.channel_cap,
            style_decay=run.style_decay,
            seed=run.generator_seed,
        )
    except ValidationError as e:
        raise InvalidArgumentError(f"Invalid generator configuration: {e}")


def open_generator(path: Path) -> GeneratorHandle:
    return load_checkpoint(path)


def open_extractor(path: Path | None) -> FeatureExtractorHandle:
    if path is None:
        return build_feature_extractor(ExtractorConfig())
    return load_extractor(path)


def write_frames(images: list[ImageBuffer], out_dir: Path) -> list[Path]:
    """frame_000.png, frame_001.png, ... in order."""
    out_dir = Path(out_dir)
    paths = []
    for k, image in enumerate(images):
        path = out_dir / f"frame_{k:03d}.png"
        write_png(image, path)
        paths.append(path)
    logger.info(f"Wrote {len(paths)} frames to {out_dir}")
    return paths


def handle_errors(func: Callable) -> Callable:
    """Translates library errors into the 2/3/4 exit-code taxonomy."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except WPlusError as e:
            logger.error(e.detail)
            typer.echo(f"error: {e.detail}", err=True)
            raise typer.Exit(code=e.exit_code)
        except ValidationError as e:
            logger.error(f"Invalid arguments: {e}")
            typer.echo(f"error: {e}", err=True)
            raise typer.Exit(code=EXIT_BAD_ARGUMENTS)
        except OSError as e:
            logger.error(f"I/O failure: {e}")
            typer.echo(f"error: {e}", err=True)
            raise typer.Exit(code=EXIT_IO)

    return wrapper
