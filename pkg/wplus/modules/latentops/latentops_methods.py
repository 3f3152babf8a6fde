import math
from pathlib import Path

import pandas as pd
import torch
from loguru import logger

from wplus.core.exceptions import InvalidArgumentError, NumericFailureError, ShapeMismatchError
from wplus.core.settings import settings
from wplus.modules.generator.generator_methods import broadcast, synthesize
from wplus.modules.generator.generator_schema import (
    ExtendedLatent,
    GeneratorHandle,
    ImageBuffer,
    NoiseBundle,
    StyleVector,
)
from wplus.modules.latentops.latentops_schema import ExpressionDirection


def _check_same_shape(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"latent shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")


def interpolate(w1: ExtendedLatent, w2: ExtendedLatent, lam: float) -> ExtendedLatent:
    """lam * w1 + (1 - lam) * w2, lam on the closed interval [0, 1]. Endpoints are exact."""
    _check_same_shape(w1.rows, w2.rows)
    if not 0.0 <= lam <= 1.0:
        raise InvalidArgumentError(f"interpolation weight must be in [0, 1], got {lam}")
    return ExtendedLatent(rows=torch.lerp(w2.rows, w1.rows, lam))


def morph_sequence(
    handle: GeneratorHandle,
    w1: ExtendedLatent,
    w2: ExtendedLatent,
    frames: int,
    noise: NoiseBundle | None = None,
) -> list[ImageBuffer]:
    """
    Frame k synthesizes interpolate(w1, w2, k / (frames - 1)): frame 0 is w2, the last frame w1.
    """
    if frames < 2:
        raise InvalidArgumentError(f"frames must be >= 2, got {frames}")
    images = []
    with torch.no_grad():
        for k in range(frames):
            images.append(synthesize(handle, interpolate(w1, w2, k / (frames - 1)), noise))
    return images


def walk_to_mean(
    handle: GeneratorHandle, latent: ExtendedLatent, mean: StyleVector, frames: int
) -> list[ImageBuffer]:
    """Straight walk from an embedded code (frame 0) to the mean code (last frame)."""
    return morph_sequence(handle, broadcast(mean, latent.num_layers), latent, frames)


def default_split(num_layers: int) -> int:
    return math.ceil(num_layers / 2)


def crossover(content: ExtendedLatent, style: ExtendedLatent, split: int | None = None) -> ExtendedLatent:
    """
    Rows [0, split) from the content code (coarse layers), rows [split, L) from the style code.
    """
    _check_same_shape(content.rows, style.rows)
    num_layers = content.num_layers
    split = default_split(num_layers) if split is None else split
    if not 0 <= split <= num_layers:
        raise InvalidArgumentError(f"split must be in [0, {num_layers}], got {split}")
    return ExtendedLatent(rows=torch.cat([content.rows[:split], style.rows[split:]], dim=0))


def expression_direction(
    w_neutral: ExtendedLatent,
    w_expressive: ExtendedLatent,
    threshold: float = settings.EXPRESSION_THRESHOLD,
    normalize: bool = True,
) -> ExpressionDirection:
    """
    d = expressive - neutral; rows with L2 norm below ``threshold`` become zero,
    then (optionally) d is divided by its Frobenius norm. Computed in float64.
    """
    _check_same_shape(w_neutral.rows, w_expressive.rows)
    if threshold < 0:
        raise InvalidArgumentError(f"threshold must be >= 0, got {threshold}")

    d = w_expressive.rows.to(torch.float64) - w_neutral.rows.to(torch.float64)
    dropped = d.norm(dim=1) < threshold
    d = torch.where(dropped.unsqueeze(1), torch.zeros_like(d), d)
    if normalize:
        norm = d.norm()
        if float(norm) == 0.0:
            raise NumericFailureError(
                f"Degenerate expression direction: every row fell below threshold {threshold}"
            )
        d = d / norm
    logger.debug(f"Expression direction keeps {int((~dropped).sum())}/{d.shape[0]} rows (threshold={threshold})")
    return ExpressionDirection(rows=d, threshold_used=threshold, normalized=normalize)


def apply_expression(w_target: ExtendedLatent, direction: ExpressionDirection, lam: float) -> ExtendedLatent:
    """w_target + lam * direction; negative lam moves towards the opposite expression."""
    _check_same_shape(w_target.rows, direction.rows)
    return ExtendedLatent(rows=w_target.rows + lam * direction.rows.to(w_target.rows.dtype))


def latent_distance(a: ExtendedLatent, b: ExtendedLatent) -> float:
    _check_same_shape(a.rows, b.rows)
    return float((a.rows.to(torch.float64) - b.rows.to(torch.float64)).norm())


def pairwise_distances(latents: list[ExtendedLatent], labels: list[str]) -> pd.DataFrame:
    """Symmetric labelled matrix of Frobenius distances with a zero diagonal."""
    if len(latents) < 2:
        raise InvalidArgumentError(f"pairwise distances need at least 2 latents, got {len(latents)}")
    if len(labels) != len(latents):
        raise InvalidArgumentError(f"got {len(labels)} labels for {len(latents)} latents")
    for latent in latents[1:]:
        _check_same_shape(latents[0].rows, latent.rows)

    n = len(latents)
    matrix = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            matrix[i][j] = matrix[j][i] = latent_distance(latents[i], latents[j])
    return pd.DataFrame(matrix, index=labels, columns=labels)


def write_distances(frame: pd.DataFrame, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index_label="label")


def read_distances(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, index_col=0, float_precision="round_trip")
