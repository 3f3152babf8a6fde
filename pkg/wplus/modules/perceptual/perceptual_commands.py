from pathlib import Path

import typer

from wplus.core.settings import settings
from wplus.modules.cli.cli_methods import handle_errors
from wplus.modules.perceptual.perceptual_methods import build_feature_extractor, save_extractor
from wplus.modules.perceptual.perceptual_schema import ExtractorConfig

perceptual_app = typer.Typer()


@perceptual_app.command("build-extractor")
@handle_errors
def cmd_build_extractor(
    out: Path = typer.Option(..., "--out", help="Checkpoint directory to write"),
    widths: tuple[int, int, int, int] = typer.Option(settings.EXTRACTOR_WIDTHS, "--widths", help="Channels per tap"),
    seed: int = typer.Option(settings.EXTRACTOR_SEED, "--seed"),
):
    """Write a seeded-random feature extractor checkpoint."""
    extractor = build_feature_extractor(ExtractorConfig(widths=widths, seed=seed))
    save_extractor(extractor, out)
    typer.echo(f"extractor widths={widths} -> {out}")
