from pathlib import Path
from typing import Optional

import torch
import typer

from wplus.core.exceptions import InvalidArgumentError
from wplus.modules.cli.cli_methods import (
    handle_errors,
    open_extractor,
    open_generator,
    resolve_run_config,
    to_embed_config,
)
from wplus.modules.cli.cli_schema import InitChoice, SpaceChoice
from wplus.modules.embedder.embedder_methods import embed, write_trace
from wplus.modules.generator.generator_methods import synthesize
from wplus.utils.imageio import read_latent, read_png, write_latent, write_png

embedder_app = typer.Typer()


@embedder_app.command("embed")
@handle_errors
def cmd_embed(
    image: Path = typer.Option(..., "--image", help="Target PNG, side equal to the generator resolution"),
    generator: Path = typer.Option(..., "--generator", help="Generator checkpoint directory"),
    extractor: Optional[Path] = typer.Option(None, "--extractor", help="Feature extractor checkpoint (seeded default)"),
    init: Optional[InitChoice] = typer.Option(None, "--init", help="Initial code: mean, random or file"),
    init_latent: Optional[Path] = typer.Option(None, "--init-latent", help="LatentFile used with --init file"),
    space: Optional[SpaceChoice] = typer.Option(None, "--space", help="Optimise in wplus (default) or w"),
    steps: Optional[int] = typer.Option(None, "--steps", help="Adam updates [default: 5000]"),
    lr: Optional[float] = typer.Option(None, "--lr", help="Learning rate [default: 0.01]"),
    lambda_mse: Optional[float] = typer.Option(None, "--lambda-mse", help="Weight of the pixel MSE term"),
    loss_resolution: Optional[int] = typer.Option(None, "--loss-resolution", help="Side for the perceptual term"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    out_latent: Path = typer.Option(..., "--out-latent", help="Output LatentFile"),
    out_image: Path = typer.Option(..., "--out-image", help="Output reconstruction PNG"),
    trace: Optional[Path] = typer.Option(None, "--trace", help="Output trace CSV"),
    config: Optional[Path] = typer.Option(None, "--config", help="key=value run configuration file"),
):
    """Embed an image into the latent space of a generator."""
    run = resolve_run_config(
        config,
        init=init,
        space=space,
        steps=steps,
        lr=lr,
        lambda_mse=lambda_mse,
        loss_resolution=loss_resolution,
        seed=seed,
    )
    provided = None
    if run.init == InitChoice.FILE:
        if init_latent is None:
            raise InvalidArgumentError("--init file needs --init-latent")
        provided = read_latent(init_latent)

    handle = open_generator(generator)
    fx = open_extractor(extractor)
    target = read_png(image)
    result = embed(handle, fx, target, to_embed_config(run, provided))

    write_latent(result.latent, out_latent)
    with torch.no_grad():
        write_png(synthesize(handle, result.latent), out_image)
    if trace is not None:
        write_trace(result.trace, trace)

    for name, sample in (("best", result.best), ("final", result.final)):
        typer.echo(
            f"{name}: step={sample.step} total={sample.total:.8g} percept={sample.percept:.8g} "
            f"mse={sample.mse:.8g} dist_to_mean={sample.dist_to_mean:.8g}"
        )
