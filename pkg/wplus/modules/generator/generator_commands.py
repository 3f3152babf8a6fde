from pathlib import Path
from typing import Optional

import torch
import typer
from loguru import logger

from wplus.core.settings import settings
from wplus.modules.cli.cli_methods import handle_errors, open_generator, resolve_run_config, to_generator_config
from wplus.modules.generator.generator_methods import (
    broadcast,
    build_toy_generator,
    check_latent,
    mean_latent,
    save_checkpoint,
    synthesize,
)
from wplus.utils.imageio import read_latent, write_latent, write_png

generator_app = typer.Typer()


@generator_app.command("synth")
@handle_errors
def cmd_synth(
    latent: Path = typer.Option(..., "--latent", help="LatentFile to synthesize"),
    generator: Path = typer.Option(..., "--generator", help="Generator checkpoint directory"),
    out: Path = typer.Option(..., "--out", help="Output PNG"),
):
    """Synthesize a latent code into an 8-bit RGB PNG."""
    handle = open_generator(generator)
    code = read_latent(latent)
    check_latent(handle, code)
    with torch.no_grad():
        write_png(synthesize(handle, code), out)
    logger.info(f"Synthesized {latent} to {out}")


@generator_app.command("mean-latent")
@handle_errors
def cmd_mean_latent(
    generator: Path = typer.Option(..., "--generator", help="Generator checkpoint directory"),
    samples: int = typer.Option(settings.MEAN_LATENT_SAMPLES, "--samples", help="Number of z draws"),
    seed: int = typer.Option(settings.MEAN_LATENT_SEED, "--seed", help="Seed of the z stream"),
    out: Path = typer.Option(..., "--out", help="Output LatentFile (mean code broadcast to every layer)"),
):
    """Estimate the mean style vector and write it as an L-row latent."""
    handle = open_generator(generator)
    mean = mean_latent(handle, samples, seed)
    write_latent(broadcast(mean, handle.num_layers), out)
    typer.echo(f"mean latent norm={float(mean.values.norm()):.6f} rows={handle.num_layers}")


@generator_app.command("build-generator")
@handle_errors
def cmd_build_generator(
    out: Path = typer.Option(..., "--out", help="Checkpoint directory to write"),
    resolution: Optional[int] = typer.Option(None, "--resolution"),
    style_dim: Optional[int] = typer.Option(None, "--style-dim"),
    mapping_layers: Optional[int] = typer.Option(None, "--mapping-layers"),
    base_channels: Optional[int] = typer.Option(None, "--base-channels"),
    channel_cap: Optional[int] = typer.Option(None, "--channel-cap"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    config: Optional[Path] = typer.Option(None, "--config", help="key=value run configuration file"),
):
    """Write a seeded toy generator checkpoint."""
    run = resolve_run_config(
        config,
        resolution=resolution,
        style_dim=style_dim,
        mapping_layers=mapping_layers,
        base_channels=base_channels,
        channel_cap=channel_cap,
        generator_seed=seed,
    )
    handle = build_toy_generator(to_generator_config(run))
    save_checkpoint(handle, out)
    typer.echo(f"generator L={handle.num_layers} D={handle.style_dim} resolution={handle.resolution} -> {out}")
