import math
import time
from pathlib import Path

import pandas as pd
import torch
from loguru import logger
from tqdm import tqdm

from wplus.core.exceptions import InvalidArgumentError, NumericFailureError, ShapeMismatchError
from wplus.core.settings import settings
from wplus.modules.embedder.embedder_schema import (
    EmbedConfig,
    EmbedResult,
    InitStrategy,
    LatentSpace,
    LossSample,
    LossTrace,
)
from wplus.modules.generator.generator_methods import (
    mean_latent,
    synthesize,
    synthesize_rows,
    with_noise,
)
from wplus.modules.generator.generator_schema import ExtendedLatent, GeneratorHandle, ImageBuffer, StyleVector
from wplus.modules.perceptual.perceptual_methods import EmbeddingLoss
from wplus.modules.perceptual.perceptual_schema import FeatureExtractorHandle
from wplus.utils.seeding import make_generator

TRACE_COLUMNS = ["step", "total", "percept", "mse", "dist_to_mean"]


def resolve_mean(handle: GeneratorHandle, config: EmbedConfig, mean: StyleVector | None = None) -> StyleVector:
    if mean is not None:
        return mean
    return mean_latent(handle, config.mean_samples, config.mean_seed)


def init_variable(handle: GeneratorHandle, config: EmbedConfig, mean: StyleVector) -> torch.Tensor:
    """
    The optimisation variable: (L, D) for W+, (D,) for W and Z.
    """
    num_layers, style_dim = handle.num_layers, handle.style_dim
    shape = (num_layers, style_dim) if config.latent_space == LatentSpace.WPLUS else (style_dim,)

    if config.init_strategy == InitStrategy.MEAN:
        if config.latent_space == LatentSpace.Z:
            # the mean of the standard-Gaussian z prior
            variable = torch.zeros(shape, dtype=handle.dtype)
        else:
            variable = mean.values.to(handle.dtype).expand(shape).clone()
    elif config.init_strategy == InitStrategy.RANDOM:
        generator = make_generator(config.seed)
        variable = (torch.rand(shape, generator=generator, dtype=torch.float32) * 2.0 - 1.0).to(handle.dtype)
    else:
        provided = config.provided.rows
        if tuple(provided.shape) != (num_layers, style_dim):
            raise ShapeMismatchError(
                f"provided latent has shape {tuple(provided.shape)}, expected {(num_layers, style_dim)}"
            )
        if config.latent_space == LatentSpace.Z:
            raise InvalidArgumentError("a provided initial latent cannot seed a Z-space embedding")
        provided = provided.to(handle.dtype)
        variable = provided.clone() if config.latent_space == LatentSpace.WPLUS else provided.mean(dim=0)
    return variable.detach().requires_grad_(True)


def variable_to_rows(handle: GeneratorHandle, variable: torch.Tensor, space: LatentSpace) -> torch.Tensor:
    """Maps the optimisation variable to the L x D code the synthesis network consumes."""
    if space == LatentSpace.WPLUS:
        return variable
    if space == LatentSpace.Z:
        variable = handle.network.mapping(variable.unsqueeze(0))[0]
    return variable.unsqueeze(0).expand(handle.num_layers, -1)


def init_latent(handle: GeneratorHandle, config: EmbedConfig, mean: StyleVector | None = None) -> ExtendedLatent:
    mean = resolve_mean(handle, config, mean)
    variable = init_variable(handle, config, mean)
    with torch.no_grad():
        return ExtendedLatent(rows=variable_to_rows(handle, variable, config.latent_space).clone())


def make_optimizer(params: list[torch.Tensor], config: EmbedConfig) -> torch.optim.Adam:
    return torch.optim.Adam(params, lr=config.learning_rate, betas=(config.beta1, config.beta2), eps=config.epsilon)


def _check_target(handle: GeneratorHandle, target: ImageBuffer) -> None:
    if not target.is_square or target.side != handle.resolution:
        raise InvalidArgumentError(
            f"target is {tuple(target.pixels.shape[:2])}, generator resolution is {handle.resolution}"
        )


def embed(
    handle: GeneratorHandle,
    extractor: FeatureExtractorHandle,
    target: ImageBuffer,
    config: EmbedConfig,
    mean: StyleVector | None = None,
) -> EmbedResult:
    """
    Adam on the chosen latent variable for exactly ``config.steps`` updates,
    noise held constant. Returns the recorded iterate with the lowest total.
    """
    _check_target(handle, target)
    started = time.perf_counter()
    if config.noise_seed is not None:
        handle = with_noise(handle, config.noise_seed)
    mean = resolve_mean(handle, config, mean)
    mean_rows = mean.values.to(handle.dtype).unsqueeze(0)

    loss_fn = EmbeddingLoss(extractor, ImageBuffer(pixels=target.pixels.to(handle.dtype)), config.weights)
    variable = init_variable(handle, config, mean)
    optimizer = make_optimizer([variable], config)

    trace = LossTrace()
    best: LossSample | None = None
    best_rows = None
    sample = None

    for step in tqdm(range(config.steps + 1), disable=not config.show_progress, desc="embed"):
        rows = variable_to_rows(handle, variable, config.latent_space)
        total, percept, mse = loss_fn(synthesize_rows(handle, rows, handle.noise))

        total_value = float(total)
        if not math.isfinite(total_value):
            logger.error(f"Embedding diverged at step {step}: total loss {total_value}")
            raise NumericFailureError(f"Non-finite loss at step {step}", step=step)

        with torch.no_grad():
            dist = float((rows - mean_rows).norm())
        sample = LossSample(step=step, total=total_value, percept=float(percept), mse=float(mse), dist_to_mean=dist)
        if step % config.record_every == 0 or step == config.steps:
            trace.samples.append(sample)
            if best is None or sample.total < best.total:
                best = sample
                best_rows = rows.detach().clone()
            logger.debug(f"step {step}: total={sample.total:.6g} percept={sample.percept:.6g} mse={sample.mse:.6g}")

        if step == config.steps:
            break
        optimizer.zero_grad()
        total.backward()
        optimizer.step()

    wallclock = time.perf_counter() - started
    logger.info(
        f"Embedded into {config.latent_space.value} in {wallclock:.1f}s: best total={best.total:.6g} "
        f"at step {best.step}, dist_to_mean={best.dist_to_mean:.4f}"
    )
    return EmbedResult(
        latent=ExtendedLatent(rows=best_rows),
        best=best,
        final=sample,
        trace=trace,
        dist_to_mean=best.dist_to_mean,
        wallclock=wallclock,
    )


def embed_into_w(
    handle: GeneratorHandle,
    extractor: FeatureExtractorHandle,
    target: ImageBuffer,
    config: EmbedConfig,
    mean: StyleVector | None = None,
) -> EmbedResult:
    return embed(handle, extractor, target, config.model_copy(update={"latent_space": LatentSpace.W}), mean)


def iterative_embed(
    handle: GeneratorHandle,
    extractor: FeatureExtractorHandle,
    target: ImageBuffer,
    config: EmbedConfig,
    rounds: int = settings.ITERATIVE_ROUNDS,
    mean: StyleVector | None = None,
) -> list[EmbedResult]:
    """
    Re-embeds the reconstruction of each round as the next round's target.
    """
    if rounds < 1:
        raise InvalidArgumentError(f"rounds must be >= 1, got {rounds}")
    if config.noise_seed is not None:
        handle = with_noise(handle, config.noise_seed)
        config = config.model_copy(update={"noise_seed": None})
    mean = resolve_mean(handle, config, mean)

    results = []
    current = target
    for k in range(rounds):
        result = embed(handle, extractor, current, config, mean)
        results.append(result)
        logger.info(f"Iterative round {k + 1}/{rounds}: best total={result.best.total:.6g}")
        with torch.no_grad():
            current = synthesize(handle, result.latent)
    return results


def trace_frame(trace: LossTrace) -> pd.DataFrame:
    return pd.DataFrame([s.model_dump() for s in trace.samples], columns=TRACE_COLUMNS)


def write_trace(trace: LossTrace, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    trace_frame(trace).to_csv(path, index=False)


def read_trace(path: Path) -> LossTrace:
    frame = pd.read_csv(path, float_precision="round_trip")
    if list(frame.columns) != TRACE_COLUMNS:
        raise InvalidArgumentError(f"trace {path} has columns {list(frame.columns)}, expected {TRACE_COLUMNS}")
    return LossTrace(samples=[LossSample(**row) for row in frame.to_dict(orient="records")])
