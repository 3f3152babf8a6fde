from pathlib import Path
from typing import Optional

import torch
import typer
from loguru import logger

from wplus.core.exceptions import InvalidArgumentError
from wplus.core.settings import settings
from wplus.modules.cli.cli_methods import handle_errors, open_generator, write_frames
from wplus.modules.generator.generator_methods import check_latent, mean_latent, synthesize
from wplus.modules.latentops.latentops_methods import (
    apply_expression,
    crossover,
    expression_direction,
    morph_sequence,
    pairwise_distances,
    walk_to_mean,
    write_distances,
)
from wplus.utils.imageio import read_latent, write_latent, write_png

latentops_app = typer.Typer()


@latentops_app.command("morph")
@handle_errors
def cmd_morph(
    a: Path = typer.Option(..., "--a", help="LatentFile shown in the last frame"),
    b: Path = typer.Option(..., "--b", help="LatentFile shown in the first frame"),
    frames: int = typer.Option(settings.MORPH_FRAMES, "--frames", help="Number of frames (>= 2)"),
    out_dir: Path = typer.Option(..., "--out-dir", help="Directory for frame_000.png ..."),
    generator: Path = typer.Option(..., "--generator", help="Generator checkpoint directory"),
):
    """Write the frames of a linear morph between two codes."""
    handle = open_generator(generator)
    w1, w2 = read_latent(a), read_latent(b)
    check_latent(handle, w1)
    check_latent(handle, w2)
    paths = write_frames(morph_sequence(handle, w1, w2, frames), out_dir)
    typer.echo(f"wrote {len(paths)} frames to {out_dir}")


@latentops_app.command("walk")
@handle_errors
def cmd_walk(
    latent: Path = typer.Option(..., "--latent", help="Embedded LatentFile (first frame)"),
    frames: int = typer.Option(settings.MORPH_FRAMES, "--frames"),
    samples: int = typer.Option(settings.MEAN_LATENT_SAMPLES, "--samples", help="z draws for the mean code"),
    seed: int = typer.Option(settings.MEAN_LATENT_SEED, "--seed"),
    out_dir: Path = typer.Option(..., "--out-dir"),
    generator: Path = typer.Option(..., "--generator", help="Generator checkpoint directory"),
):
    """Walk from an embedded code to the mean code."""
    handle = open_generator(generator)
    code = read_latent(latent)
    check_latent(handle, code)
    mean = mean_latent(handle, samples, seed)
    paths = write_frames(walk_to_mean(handle, code, mean, frames), out_dir)
    typer.echo(f"wrote {len(paths)} frames to {out_dir}")


@latentops_app.command("stylemix")
@handle_errors
def cmd_stylemix(
    content: Path = typer.Option(..., "--content", help="LatentFile providing the coarse rows"),
    style: Path = typer.Option(..., "--style", help="LatentFile providing the fine rows"),
    split: Optional[int] = typer.Option(None, "--split", help="First style row [default: ceil(L/2)]"),
    out: Path = typer.Option(..., "--out", help="Output PNG"),
    generator: Path = typer.Option(..., "--generator", help="Generator checkpoint directory"),
):
    """Crossover of two codes at a layer boundary."""
    handle = open_generator(generator)
    w_content, w_style = read_latent(content), read_latent(style)
    check_latent(handle, w_content)
    check_latent(handle, w_style)
    mixed = crossover(w_content, w_style, split)
    with torch.no_grad():
        write_png(synthesize(handle, mixed), out)
    logger.info(f"Style mix of {content} and {style} written to {out}")


@latentops_app.command("expr")
@handle_errors
def cmd_expr(
    target: Path = typer.Option(..., "--target", help="LatentFile to edit"),
    neutral: Path = typer.Option(..., "--neutral"),
    expressive: Path = typer.Option(..., "--expressive"),
    lam: float = typer.Option(..., "--lambda", help="Step along the direction; negative reverses it"),
    threshold: float = typer.Option(settings.EXPRESSION_THRESHOLD, "--threshold", help="Rows below this norm drop"),
    normalize: bool = typer.Option(True, "--normalize/--no-normalize"),
    out: Path = typer.Option(..., "--out", help="Output PNG"),
    out_latent: Optional[Path] = typer.Option(None, "--out-latent", help="Also write the edited LatentFile"),
    generator: Path = typer.Option(..., "--generator", help="Generator checkpoint directory"),
):
    """Transfer the expression difference neutral -> expressive onto a target."""
    handle = open_generator(generator)
    w_target = read_latent(target)
    check_latent(handle, w_target)
    direction = expression_direction(read_latent(neutral), read_latent(expressive), threshold, normalize)
    edited = apply_expression(w_target, direction, lam)
    with torch.no_grad():
        write_png(synthesize(handle, edited), out)
    if out_latent is not None:
        write_latent(edited, out_latent)
    typer.echo(f"rows kept={len(direction.active_rows)}/{direction.rows.shape[0]} lambda={lam:g}")


@latentops_app.command("distances")
@handle_errors
def cmd_distances(
    latents: list[Path] = typer.Option(..., "--latents", help="LatentFile; repeat for each code"),
    labels: Optional[list[str]] = typer.Option(None, "--labels", help="Label per latent; repeat in order"),
    out: Path = typer.Option(..., "--out", help="Output CSV"),
):
    """Pairwise Frobenius distances between codes as a labelled CSV."""
    labels = labels or [p.stem for p in latents]
    if len(labels) != len(latents):
        raise InvalidArgumentError(f"got {len(labels)} labels for {len(latents)} latents")
    frame = pairwise_distances([read_latent(p) for p in latents], labels)
    write_distances(frame, out)
    typer.echo(f"{len(labels)}x{len(labels)} distance matrix -> {out}")
