import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import pandas as pd
import torch
import torch.nn.functional as F
from loguru import logger

from wplus.core.exceptions import InvalidArgumentError
from wplus.core.settings import settings
from wplus.modules.embedder.embedder_methods import embed, iterative_embed, resolve_mean
from wplus.modules.embedder.embedder_schema import EmbedConfig, EmbedResult, InitStrategy, LatentSpace
from wplus.modules.generator.generator_methods import build_toy_generator, synthesize, with_noise
from wplus.modules.generator.generator_schema import GeneratorHandle, ImageBuffer, StyleVector
from wplus.modules.perceptual.perceptual_methods import resize_nchw
from wplus.modules.perceptual.perceptual_schema import FeatureExtractorHandle, LossWeights
from wplus.modules.stresslab.stresslab_schema import (
    DRIFT_COLUMNS,
    FFHQ_REFERENCE,
    REFERENCE_RESOLUTION,
    REGION_COLUMNS,
    REPORT_COLUMNS,
    AffineKind,
    AffineSpec,
    DefectSpec,
    DriftRow,
    RegionRow,
    StressReport,
    StressRow,
)
from wplus.utils.seeding import derive_seed

RANDOM_WEIGHTS_STREAM = 2


# Image transforms
def _resample(pixels: torch.Tensor, theta: list[list[float]], fill: float) -> torch.Tensor:
    """Bilinear resampling of an (H, W, 3) image; out-of-frame pixels take ``fill``."""
    images = pixels.permute(2, 0, 1).unsqueeze(0)
    matrix = torch.tensor([theta], dtype=pixels.dtype)
    grid = F.affine_grid(matrix, list(images.shape), align_corners=False)
    sampled = F.grid_sample(images, grid, mode="bilinear", padding_mode="zeros", align_corners=False)
    if fill != 0.0:
        coverage = F.grid_sample(torch.ones_like(images[:, :1]), grid, mode="bilinear", padding_mode="zeros",
                                 align_corners=False)
        sampled = sampled + fill * (1.0 - coverage)
    return sampled[0].permute(1, 2, 0)


def _zoom(pixels: torch.Tensor, scaled_side: int, fill: float) -> torch.Tensor:
    side = pixels.shape[0]
    scaled = resize_nchw(pixels.permute(2, 0, 1).unsqueeze(0), scaled_side)[0].permute(1, 2, 0)
    if scaled_side >= side:
        offset = (scaled_side - side) // 2
        return scaled[offset : offset + side, offset : offset + side]
    out = torch.full_like(pixels, fill)
    offset = (side - scaled_side) // 2
    out[offset : offset + scaled_side, offset : offset + scaled_side] = scaled
    return out


def apply_affine(image: ImageBuffer, spec: AffineSpec) -> ImageBuffer:
    """
    Translations shift by ``magnitude`` pixels, zooms rescale about the centre,
    rotations turn counter-clockwise. Output size is unchanged.
    """
    pixels = image.pixels
    side = pixels.shape[1]

    if spec.kind in (AffineKind.TRANSLATE_RIGHT, AffineKind.TRANSLATE_LEFT):
        shift = 2.0 * spec.magnitude / side
        if spec.kind == AffineKind.TRANSLATE_RIGHT:
            shift = -shift
        out = _resample(pixels, [[1.0, 0.0, shift], [0.0, 1.0, 0.0]], spec.fill)
    elif spec.kind == AffineKind.ZOOM_IN:
        out = _zoom(pixels, max(1, round(side * spec.magnitude)), spec.fill)
    elif spec.kind == AffineKind.ZOOM_OUT:
        out = _zoom(pixels, max(1, round(side / spec.magnitude)), spec.fill)
    else:
        quarter_turns = spec.magnitude / 90.0
        if quarter_turns == round(quarter_turns):
            # exact pixel permutation
            out = torch.rot90(pixels, int(round(quarter_turns)) % 4, dims=(0, 1)).clone()
        else:
            angle = math.radians(spec.magnitude)
            cos, sin = math.cos(angle), math.sin(angle)
            out = _resample(pixels, [[cos, -sin, 0.0], [sin, cos, 0.0]], spec.fill)
    return ImageBuffer(pixels=out)


def apply_defects(image: ImageBuffer, spec: DefectSpec) -> ImageBuffer:
    height, width = image.pixels.shape[:2]
    out = image.pixels.clone()
    for x, y, w, h in spec.rectangles:
        if x + w > width or y + h > height:
            raise InvalidArgumentError(f"defect rectangle {(x, y, w, h)} exceeds image bounds {width}x{height}")
        out[y : y + h, x : x + w, :] = spec.fill
    return ImageBuffer(pixels=out)


def defect_mask(image: ImageBuffer, spec: DefectSpec) -> torch.Tensor:
    mask = torch.zeros(image.pixels.shape[:2], dtype=torch.bool)
    for x, y, w, h in spec.rectangles:
        mask[y : y + h, x : x + w] = True
    return mask


def region_errors(reconstruction: ImageBuffer, reference: ImageBuffer, spec: DefectSpec) -> tuple[float, float]:
    """Per-pixel MSE (masked region, unmasked region) of a reconstruction against the clean reference."""
    mask = defect_mask(reference, spec)
    squared = (reconstruction.pixels.detach() - reference.pixels).pow(2).mean(dim=2)
    masked = float(squared[mask].mean()) if bool(mask.any()) else 0.0
    unmasked = float(squared[~mask].mean()) if bool((~mask).any()) else 0.0
    return masked, unmasked


def image_rmse(a: ImageBuffer, b: ImageBuffer) -> float:
    return float((a.pixels.detach() - b.pixels.detach()).pow(2).mean().sqrt())


def image_drift(target: ImageBuffer, reconstructions: list[ImageBuffer]) -> list[DriftRow]:
    """Round k compares its reconstruction with the target and with round k-1 (round 1 with the target)."""
    rows = []
    previous = target
    for k, image in enumerate(reconstructions, start=1):
        rows.append(
            DriftRow(round=k, rmse_to_target=image_rmse(image, target), rmse_to_previous=image_rmse(image, previous))
        )
        previous = image
    return rows


# Protocol presets
def scale_pixels(pixels: float, resolution: int) -> float:
    """Translation magnitudes are given for 1024px images and scale with resolution."""
    return pixels * resolution / REFERENCE_RESOLUTION


def standard_affine_specs(resolution: int) -> list[AffineSpec]:
    return [
        AffineSpec(kind=AffineKind.TRANSLATE_RIGHT, magnitude=scale_pixels(140, resolution)),
        AffineSpec(kind=AffineKind.TRANSLATE_LEFT, magnitude=scale_pixels(160, resolution)),
        AffineSpec(kind=AffineKind.ZOOM_OUT, magnitude=2.0),
        AffineSpec(kind=AffineKind.ZOOM_IN, magnitude=2.0),
        AffineSpec(kind=AffineKind.ROTATE, magnitude=90.0),
        AffineSpec(kind=AffineKind.ROTATE, magnitude=180.0),
    ]


def default_defect_specs(resolution: int) -> list[DefectSpec]:
    """Generic occlusions (an upper band and a lower block) used when no rectangles are configured."""
    unit = resolution // 8
    return [
        DefectSpec(rectangles=[(2 * unit, 2 * unit, 4 * unit, unit)], label="defect_upper"),
        DefectSpec(rectangles=[(3 * unit, 5 * unit, 2 * unit, unit)], label="defect_lower"),
        DefectSpec(rectangles=[(2 * unit, 2 * unit, 4 * unit, unit), (3 * unit, 5 * unit, 2 * unit, unit)],
                   label="defect_both"),
    ]


# Suites
def config_hash(config: EmbedConfig) -> str:
    payload = json.dumps(config.fingerprint(), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def result_row(condition: str, result: EmbedResult, config: EmbedConfig) -> StressRow:
    return StressRow(
        condition=condition,
        loss_total=result.best.total,
        loss_total_x1e5=result.best.total * 1e5,
        dist_to_mean=result.dist_to_mean,
        steps=config.steps,
        seed=config.seed,
    )


def _references(conditions: list[str]) -> dict[str, tuple[float, float]]:
    return {c: FFHQ_REFERENCE[c] for c in conditions if c in FFHQ_REFERENCE}


def _reconstruct(handle: GeneratorHandle, config: EmbedConfig, result: EmbedResult) -> ImageBuffer:
    """Re-synthesizes a result under the noise bundle its embedding ran with."""
    if config.noise_seed is not None:
        handle = with_noise(handle, config.noise_seed)
    with torch.no_grad():
        return synthesize(handle, result.latent)


def run_conditions(
    handle: GeneratorHandle,
    extractor: FeatureExtractorHandle,
    conditions: list[tuple[str, ImageBuffer]],
    config: EmbedConfig,
    jobs: int = 1,
    mean: StyleVector | None = None,
) -> tuple[list[StressRow], list[EmbedResult]]:
    """
    Embeds every (label, image) with the identical config. Conditions may run
    concurrently; rows come back in condition order.
    """
    mean = resolve_mean(handle, config, mean)

    def run_one(condition: tuple[str, ImageBuffer]) -> EmbedResult:
        label, image = condition
        logger.info(f"Stress condition {label}: embedding {config.steps} steps")
        return embed(handle, extractor, image, config, mean)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_one, conditions))
    else:
        results = [run_one(c) for c in conditions]
    rows = [result_row(label, result, config) for (label, _), result in zip(conditions, results, strict=True)]
    return rows, results


def run_affine_suite(
    handle: GeneratorHandle,
    extractor: FeatureExtractorHandle,
    image: ImageBuffer,
    config: EmbedConfig,
    specs: list[AffineSpec],
    jobs: int = 1,
    mean: StyleVector | None = None,
) -> StressReport:
    conditions = [("baseline", image)] + [(spec.condition, apply_affine(image, spec)) for spec in specs]
    rows, _ = run_conditions(handle, extractor, conditions, config, jobs, mean)
    return StressReport(config_hash=config_hash(config), rows=rows, references=_references([c for c, _ in conditions]))


def run_defect_suite(
    handle: GeneratorHandle,
    extractor: FeatureExtractorHandle,
    image: ImageBuffer,
    config: EmbedConfig,
    specs: list[DefectSpec],
    jobs: int = 1,
    mean: StyleVector | None = None,
) -> StressReport:
    """
    Embeds the clean target and each occluded copy. Every defect condition also
    gets region errors: its reconstruction against the clean image, inside and
    outside the occluded rectangles.
    """
    conditions = [("non_defective", image)]
    for i, spec in enumerate(specs):
        conditions.append((spec.label or f"defect_{i}", apply_defects(image, spec)))
    rows, results = run_conditions(handle, extractor, conditions, config, jobs, mean)
    regions = []
    for (label, _), spec, result in zip(conditions[1:], specs, results[1:], strict=True):
        masked, unmasked = region_errors(_reconstruct(handle, config, result), image, spec)
        logger.debug(f"{label}: masked_error={masked:.6g} unmasked_error={unmasked:.6g}")
        regions.append(RegionRow(condition=label, masked_error=masked, unmasked_error=unmasked))
    return StressReport(
        config_hash=config_hash(config),
        rows=rows,
        references=_references([c for c, _ in conditions]),
        regions=regions,
    )


def run_iterative_suite(
    handle: GeneratorHandle,
    extractor: FeatureExtractorHandle,
    image: ImageBuffer,
    config: EmbedConfig,
    rounds: int = settings.ITERATIVE_ROUNDS,
    mean: StyleVector | None = None,
) -> StressReport:
    results = iterative_embed(handle, extractor, image, config, rounds, mean)
    rows = [result_row(f"round_{k}", result, config) for k, result in enumerate(results, start=1)]
    drift = image_drift(image, [_reconstruct(handle, config, result) for result in results])
    return StressReport(config_hash=config_hash(config), rows=rows, drift=drift)


def run_space_suite(
    handle: GeneratorHandle,
    extractor: FeatureExtractorHandle,
    image: ImageBuffer,
    config: EmbedConfig,
    mean: StyleVector | None = None,
    random_weights_seed: int | None = None,
) -> StressReport:
    """
    W+ versus W, mean versus random start, on the given generator and on a
    network of the same architecture with freshly drawn weights. Conditions are
    ``network/space/init``; the random-weights network uses its own mean code.
    """
    if random_weights_seed is None:
        random_weights_seed = derive_seed(handle.config.seed, RANDOM_WEIGHTS_STREAM)
    random_handle = build_toy_generator(handle.config.model_copy(update={"seed": random_weights_seed}), handle.dtype)
    networks = [
        ("generator", handle, resolve_mean(handle, config, mean)),
        ("random_weights", random_handle, resolve_mean(random_handle, config)),
    ]
    rows = []
    for network, network_handle, network_mean in networks:
        for space in (LatentSpace.WPLUS, LatentSpace.W):
            for strategy in (InitStrategy.MEAN, InitStrategy.RANDOM):
                variant = config.model_copy(update={"latent_space": space, "init_strategy": strategy})
                label = f"{network}/{space.value}/{strategy.value}"
                logger.info(f"Space comparison {label}: embedding {config.steps} steps")
                result = embed(network_handle, extractor, image, variant, network_mean)
                rows.append(result_row(label, result, variant))
    base = config.model_copy(update={"latent_space": LatentSpace.WPLUS, "init_strategy": InitStrategy.MEAN})
    return StressReport(config_hash=config_hash(base), rows=rows)


def run_init_suite(
    handle: GeneratorHandle,
    extractor: FeatureExtractorHandle,
    targets: list[tuple[str, ImageBuffer]],
    config: EmbedConfig,
    jobs: int = 1,
    mean: StyleVector | None = None,
) -> StressReport:
    """
    Mean versus random initialisation for every labelled target. The strategy
    is the only field that differs between the two rows of a target.
    """
    mean = resolve_mean(handle, config, mean)
    rows = []
    for strategy in (InitStrategy.MEAN, InitStrategy.RANDOM):
        strategy_config = config.model_copy(update={"init_strategy": strategy})
        labelled = [(f"{label}/{strategy.value}", image) for label, image in targets]
        strategy_rows, _ = run_conditions(handle, extractor, labelled, strategy_config, jobs, mean)
        rows.extend(strategy_rows)
    rows.sort(key=lambda r: r.condition)
    base = config.model_copy(update={"init_strategy": InitStrategy.MEAN})
    return StressReport(config_hash=config_hash(base), rows=rows, references=_references([r.condition for r in rows]))


LOSS_VARIANTS = {
    "percept_mse": lambda w: w,
    "percept_only": lambda w: w.model_copy(update={"lambda_mse": 0.0}),
    "mse_only": lambda w: w.model_copy(update={"lambda_percept": (0.0, 0.0, 0.0, 0.0)}),
    "single_stage": lambda w: w.model_copy(update={"lambda_percept": (0.0, 0.0, 0.0, w.lambda_percept[3])}),
}


def run_loss_suite(
    handle: GeneratorHandle,
    extractor: FeatureExtractorHandle,
    image: ImageBuffer,
    config: EmbedConfig,
    mean: StyleVector | None = None,
) -> StressReport:
    """
    Embeds one target under each loss variant. Rows report the pixel MSE of the
    result (in ``loss_total``) so the variants are comparable on one scale.
    """
    mean = resolve_mean(handle, config, mean)
    rows = []
    for name, variant in LOSS_VARIANTS.items():
        weights: LossWeights = variant(config.weights)
        result = embed(handle, extractor, image, config.model_copy(update={"weights": weights}), mean)
        rows.append(
            StressRow(
                condition=name,
                loss_total=result.best.mse,
                loss_total_x1e5=result.best.mse * 1e5,
                dist_to_mean=result.dist_to_mean,
                steps=config.steps,
                seed=config.seed,
            )
        )
    return StressReport(config_hash=config_hash(config), rows=rows)


def run_noise_suite(
    handle: GeneratorHandle,
    extractor: FeatureExtractorHandle,
    image: ImageBuffer,
    config: EmbedConfig,
    noise_seeds: list[int],
    mean: StyleVector | None = None,
) -> StressReport:
    """Restarts the same embedding under different constant noise bundles."""
    mean = resolve_mean(handle, config, mean)
    rows = []
    for noise_seed in noise_seeds:
        result = embed(handle, extractor, image, config.model_copy(update={"noise_seed": noise_seed}), mean)
        rows.append(result_row(f"noise_{noise_seed}", result, config))
    return StressReport(config_hash=config_hash(config.model_copy(update={"noise_seed": None})), rows=rows)


# Report I/O
def write_report(report: StressReport, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = [f"# config_sha256={report.config_hash}"]
    for condition, (loss_x1e5, dist) in report.references.items():
        header.append(f"# reference {condition} loss_total_x1e5={loss_x1e5} dist_to_mean={dist}")
    frame = pd.DataFrame([row.model_dump() for row in report.rows], columns=REPORT_COLUMNS)
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(header) + "\n")
        frame.to_csv(fh, index=False)
    logger.info(f"Wrote stress report with {len(report.rows)} rows to {path}")


def read_report(path: Path) -> StressReport:
    lines = Path(path).read_text().splitlines(keepends=True)
    config = ""
    references = {}
    body_start = 0
    for i, line in enumerate(lines):
        if not line.startswith("#"):
            body_start = i
            break
        parts = line[1:].split()
        if parts and parts[0].startswith("config_sha256="):
            config = parts[0].split("=", 1)[1]
        elif len(parts) == 4 and parts[0] == "reference":
            references[parts[1]] = (float(parts[2].split("=", 1)[1]), float(parts[3].split("=", 1)[1]))
    frame = pd.read_csv(io.StringIO("".join(lines[body_start:])), float_precision="round_trip",
                        dtype={"condition": str})
    if list(frame.columns) != REPORT_COLUMNS:
        raise InvalidArgumentError(f"report {path} has columns {list(frame.columns)}, expected {REPORT_COLUMNS}")
    rows = [StressRow(**record) for record in frame.to_dict(orient="records")]
    return StressReport(config_hash=config, rows=rows, references=references)


def _write_table(records: list[dict], columns: list[str], path: Path, what: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(records, columns=columns).to_csv(path, index=False)
    logger.info(f"Wrote {what} with {len(records)} rows to {path}")


def write_drift(report: StressReport, path: Path) -> None:
    _write_table([row.model_dump() for row in report.drift], DRIFT_COLUMNS, path, "drift table")


def write_regions(report: StressReport, path: Path) -> None:
    _write_table([row.model_dump() for row in report.regions], REGION_COLUMNS, path, "region error table")
