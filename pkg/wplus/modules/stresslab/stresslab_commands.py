from pathlib import Path
from typing import Optional

import typer

from wplus.core.exceptions import InvalidArgumentError
from wplus.core.settings import settings
from wplus.modules.cli.cli_methods import (
    handle_errors,
    open_extractor,
    open_generator,
    resolve_run_config,
    to_embed_config,
)
from wplus.modules.cli.cli_schema import InitChoice, RunConfig
from wplus.modules.stresslab.stresslab_methods import (
    default_defect_specs,
    run_affine_suite,
    run_defect_suite,
    run_init_suite,
    run_iterative_suite,
    run_loss_suite,
    run_noise_suite,
    run_space_suite,
    standard_affine_specs,
    write_drift,
    write_regions,
    write_report,
)
from wplus.modules.stresslab.stresslab_schema import AffineKind, AffineSpec, DefectSpec, StressReport
from wplus.utils.imageio import read_png

stresslab_app = typer.Typer(help="Stress protocols; each writes a CSV report.")

IMAGE_OPTION = typer.Option(..., "--image", help="Target PNG")
GENERATOR_OPTION = typer.Option(..., "--generator", help="Generator checkpoint directory")
EXTRACTOR_OPTION = typer.Option(None, "--extractor", help="Feature extractor checkpoint (seeded default)")
REPORT_OPTION = typer.Option(..., "--report", help="Output report CSV")
CONFIG_OPTION = typer.Option(None, "--config", help="key=value run configuration file")
STEPS_OPTION = typer.Option(None, "--steps", help="Adam updates per condition")
SEED_OPTION = typer.Option(None, "--seed")


def _run_config(config: Path | None, **flags) -> RunConfig:
    run = resolve_run_config(config, **flags)
    if run.init == InitChoice.FILE:
        raise InvalidArgumentError("stress suites start from the mean or a random code, not from a file")
    return run


def _finish(report: StressReport, path: Path) -> None:
    write_report(report, path)
    for row in report.rows:
        typer.echo(f"{row.condition}: loss_total={row.loss_total:.6g} dist_to_mean={row.dist_to_mean:.6g}")
    for region in report.regions:
        typer.echo(
            f"{region.condition}: masked_error={region.masked_error:.6g} unmasked_error={region.unmasked_error:.6g}"
        )
    for drift in report.drift:
        typer.echo(
            f"round_{drift.round}: rmse_to_target={drift.rmse_to_target:.6g} "
            f"rmse_to_previous={drift.rmse_to_previous:.6g}"
        )


def parse_transform(text: str) -> AffineSpec:
    """``kind:magnitude``, e.g. ``translate_right:8`` or ``rotate:45``."""
    kind, _, magnitude = text.partition(":")
    try:
        return AffineSpec(kind=AffineKind(kind), magnitude=float(magnitude))
    except ValueError as e:
        raise InvalidArgumentError(f"Invalid transform '{text}': expected kind:magnitude ({e})")


def parse_rectangle(text: str) -> tuple[int, int, int, int]:
    """``x,y,w,h`` in pixels."""
    parts = text.split(",")
    try:
        x, y, w, h = (int(p) for p in parts)
    except ValueError:
        raise InvalidArgumentError(f"Invalid rectangle '{text}': expected x,y,w,h")
    return x, y, w, h


@stresslab_app.command("affine")
@handle_errors
def cmd_stress_affine(
    image: Path = IMAGE_OPTION,
    generator: Path = GENERATOR_OPTION,
    extractor: Optional[Path] = EXTRACTOR_OPTION,
    transform: Optional[list[str]] = typer.Option(None, "--transform", help="kind:magnitude; repeatable"),
    preset: bool = typer.Option(True, "--preset/--no-preset", help="Include the standard six transforms"),
    steps: Optional[int] = STEPS_OPTION,
    seed: Optional[int] = SEED_OPTION,
    jobs: Optional[int] = typer.Option(None, "--jobs", help="Conditions embedded concurrently"),
    report: Path = REPORT_OPTION,
    config: Optional[Path] = CONFIG_OPTION,
):
    """Embed the target and its translated, zoomed and rotated copies."""
    run = _run_config(config, steps=steps, seed=seed, jobs=jobs)
    handle = open_generator(generator)
    specs = standard_affine_specs(handle.resolution) if preset else []
    specs += [parse_transform(t) for t in transform or []]
    result = run_affine_suite(
        handle, open_extractor(extractor), read_png(image), to_embed_config(run), specs, jobs=run.jobs
    )
    _finish(result, report)


@stresslab_app.command("defect")
@handle_errors
def cmd_stress_defect(
    image: Path = IMAGE_OPTION,
    generator: Path = GENERATOR_OPTION,
    extractor: Optional[Path] = EXTRACTOR_OPTION,
    rect: Optional[list[str]] = typer.Option(None, "--rect", help="x,y,w,h occlusion; one condition per flag"),
    fill: float = typer.Option(settings.DEFECT_FILL, "--fill", help="Occluder value in [0, 1]"),
    preset: bool = typer.Option(True, "--preset/--no-preset", help="Use generic occlusions when no --rect is given"),
    steps: Optional[int] = STEPS_OPTION,
    seed: Optional[int] = SEED_OPTION,
    jobs: Optional[int] = typer.Option(None, "--jobs", help="Conditions embedded concurrently"),
    report: Path = REPORT_OPTION,
    regions: Optional[Path] = typer.Option(None, "--regions", help="Output CSV of masked/unmasked errors"),
    config: Optional[Path] = CONFIG_OPTION,
):
    """Embed the target and copies with rectangular regions blanked out."""
    run = _run_config(config, steps=steps, seed=seed, jobs=jobs)
    handle = open_generator(generator)
    if rect:
        specs = [
            DefectSpec(rectangles=[parse_rectangle(r)], fill=fill, label=f"defect_{i}") for i, r in enumerate(rect)
        ]
    elif preset:
        specs = [spec.model_copy(update={"fill": fill}) for spec in default_defect_specs(handle.resolution)]
    else:
        specs = []
    result = run_defect_suite(
        handle, open_extractor(extractor), read_png(image), to_embed_config(run), specs, jobs=run.jobs
    )
    _finish(result, report)
    if regions is not None:
        write_regions(result, regions)


@stresslab_app.command("iterate")
@handle_errors
def cmd_stress_iterate(
    image: Path = IMAGE_OPTION,
    generator: Path = GENERATOR_OPTION,
    extractor: Optional[Path] = EXTRACTOR_OPTION,
    rounds: Optional[int] = typer.Option(None, "--rounds", help="Embed-then-resynthesize rounds [default: 7]"),
    steps: Optional[int] = STEPS_OPTION,
    seed: Optional[int] = SEED_OPTION,
    report: Path = REPORT_OPTION,
    drift: Optional[Path] = typer.Option(None, "--drift", help="Output CSV of per-round image drift"),
    config: Optional[Path] = CONFIG_OPTION,
):
    """Repeatedly embed the generator's own reconstruction."""
    run = _run_config(config, steps=steps, seed=seed, rounds=rounds)
    result = run_iterative_suite(
        open_generator(generator), open_extractor(extractor), read_png(image), to_embed_config(run), run.rounds
    )
    _finish(result, report)
    if drift is not None:
        write_drift(result, drift)


@stresslab_app.command("space")
@handle_errors
def cmd_stress_space(
    image: Path = IMAGE_OPTION,
    generator: Path = GENERATOR_OPTION,
    extractor: Optional[Path] = EXTRACTOR_OPTION,
    random_weights_seed: Optional[int] = typer.Option(
        None, "--random-weights-seed", help="Weight seed of the comparison network [default: derived]"
    ),
    steps: Optional[int] = STEPS_OPTION,
    seed: Optional[int] = SEED_OPTION,
    report: Path = REPORT_OPTION,
    config: Optional[Path] = CONFIG_OPTION,
):
    """W+ versus W and mean versus random start, on the generator and on random weights."""
    run = _run_config(config, steps=steps, seed=seed)
    result = run_space_suite(
        open_generator(generator),
        open_extractor(extractor),
        read_png(image),
        to_embed_config(run),
        random_weights_seed=random_weights_seed,
    )
    _finish(result, report)


@stresslab_app.command("init")
@handle_errors
def cmd_stress_init(
    image: list[Path] = typer.Option(..., "--image", help="Target PNG; repeatable"),
    labels: Optional[list[str]] = typer.Option(None, "--labels", help="Label per target [default: file stem]"),
    generator: Path = GENERATOR_OPTION,
    extractor: Optional[Path] = EXTRACTOR_OPTION,
    steps: Optional[int] = STEPS_OPTION,
    seed: Optional[int] = SEED_OPTION,
    jobs: Optional[int] = typer.Option(None, "--jobs", help="Targets embedded concurrently"),
    report: Path = REPORT_OPTION,
    config: Optional[Path] = CONFIG_OPTION,
):
    """Mean versus random initialisation on every target."""
    labels = labels or [p.stem for p in image]
    if len(labels) != len(image):
        raise InvalidArgumentError(f"got {len(labels)} labels for {len(image)} images")
    run = _run_config(config, steps=steps, seed=seed, jobs=jobs)
    targets = [(label, read_png(p)) for label, p in zip(labels, image, strict=True)]
    result = run_init_suite(
        open_generator(generator), open_extractor(extractor), targets, to_embed_config(run), jobs=run.jobs
    )
    _finish(result, report)


@stresslab_app.command("loss")
@handle_errors
def cmd_stress_loss(
    image: Path = IMAGE_OPTION,
    generator: Path = GENERATOR_OPTION,
    extractor: Optional[Path] = EXTRACTOR_OPTION,
    steps: Optional[int] = STEPS_OPTION,
    seed: Optional[int] = SEED_OPTION,
    report: Path = REPORT_OPTION,
    config: Optional[Path] = CONFIG_OPTION,
):
    """Compare loss variants by the pixel error of their embeddings."""
    run = _run_config(config, steps=steps, seed=seed)
    result = run_loss_suite(
        open_generator(generator), open_extractor(extractor), read_png(image), to_embed_config(run)
    )
    _finish(result, report)


@stresslab_app.command("noise")
@handle_errors
def cmd_stress_noise(
    image: Path = IMAGE_OPTION,
    generator: Path = GENERATOR_OPTION,
    extractor: Optional[Path] = EXTRACTOR_OPTION,
    noise_seed: Optional[list[int]] = typer.Option(None, "--noise-seed", help="Noise bundle seed; repeatable"),
    steps: Optional[int] = STEPS_OPTION,
    seed: Optional[int] = SEED_OPTION,
    report: Path = REPORT_OPTION,
    config: Optional[Path] = CONFIG_OPTION,
):
    """Restart one embedding under several constant noise bundles."""
    run = _run_config(config, steps=steps, seed=seed)
    result = run_noise_suite(
        open_generator(generator),
        open_extractor(extractor),
        read_png(image),
        to_embed_config(run),
        noise_seed or [0, 1, 2],
    )
    _finish(result, report)
