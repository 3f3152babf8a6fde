import copy
from pathlib import Path

import torch
from loguru import logger

from wplus.core.exceptions import CheckpointError, InvalidArgumentError, ShapeMismatchError
from wplus.models.checkpoint import check_tensor_names, read_checkpoint, write_checkpoint
from wplus.models.networks import StyleGenerator
from wplus.modules.generator.generator_schema import (
    ExtendedLatent,
    GeneratorConfig,
    GeneratorHandle,
    ImageBuffer,
    LatentZ,
    NoiseBundle,
    StyleVector,
)
from wplus.utils.seeding import derive_seed, make_generator

NOISE_STREAM = 1
MEAN_BATCH = 4096


def _freeze(network: StyleGenerator, dtype: torch.dtype) -> StyleGenerator:
    return network.to(dtype).eval().requires_grad_(False)


def _empty_network(config: GeneratorConfig) -> StyleGenerator:
    network = StyleGenerator(
        config.style_dim, config.mapping_layers, config.layer_channels, config.style_gains, device="meta"
    )
    return network.to_empty(device="cpu")


def make_noise(config: GeneratorConfig, seed: int | None = None, dtype: torch.dtype = torch.float32) -> NoiseBundle:
    """
    Constant per-layer noise images. Defaults to a sub-stream of the generator seed.
    """
    seed = derive_seed(config.seed, NOISE_STREAM) if seed is None else seed
    generator = make_generator(seed)
    maps = [
        torch.randn(1, 1, r, r, generator=generator, dtype=torch.float32).to(dtype) for r in config.layer_resolutions
    ]
    return NoiseBundle(maps=maps, seed=seed)


def build_toy_generator(config: GeneratorConfig, dtype: torch.dtype = torch.float32) -> GeneratorHandle:
    """
    Seeded-random stand-in for a pre-trained generator.

    Weights are zero-mean Gaussians scaled by fan-in, drawn in float32 from one
    stream seeded with ``config.seed``; the same config always yields the same bits.
    """
    network = _empty_network(config)
    network.reset_parameters(make_generator(config.seed))
    handle = GeneratorHandle(config=config, network=_freeze(network, dtype), noise=make_noise(config, dtype=dtype))
    logger.info(
        f"Built toy generator {config.resolution}px, L={config.num_layers}, D={config.style_dim}, seed={config.seed}"
    )
    return handle


def with_dtype(handle: GeneratorHandle, dtype: torch.dtype) -> GeneratorHandle:
    network = _freeze(copy.deepcopy(handle.network), dtype)
    noise = NoiseBundle(maps=[m.to(dtype) for m in handle.noise.maps], seed=handle.noise.seed)
    return GeneratorHandle(config=handle.config, network=network, noise=noise)


def with_noise(handle: GeneratorHandle, seed: int) -> GeneratorHandle:
    """Same weights, different constant noise."""
    return GeneratorHandle(
        config=handle.config, network=handle.network, noise=make_noise(handle.config, seed, handle.dtype)
    )


def map_latent(handle: GeneratorHandle, z: LatentZ) -> StyleVector:
    if z.values.shape != (handle.style_dim,):
        raise ShapeMismatchError(f"z has shape {tuple(z.values.shape)}, generator expects ({handle.style_dim},)")
    w = handle.network.mapping(z.values.to(handle.dtype).unsqueeze(0))[0]
    return StyleVector(values=w)


def sample_z(handle: GeneratorHandle, num_samples: int, seed: int) -> torch.Tensor:
    """Standard-Gaussian z draws from the seeded stream, shape (num_samples, D)."""
    generator = make_generator(seed)
    return torch.randn(num_samples, handle.style_dim, generator=generator, dtype=torch.float32).to(handle.dtype)


def mean_latent(handle: GeneratorHandle, num_samples: int, seed: int) -> StyleVector:
    if num_samples < 1:
        raise InvalidArgumentError(f"num_samples must be >= 1, got {num_samples}")
    z = sample_z(handle, num_samples, seed)
    total = torch.zeros(handle.style_dim, dtype=torch.float64)
    with torch.no_grad():
        for chunk in z.split(MEAN_BATCH):
            total += handle.network.mapping(chunk).to(torch.float64).sum(dim=0)
    mean = (total / num_samples).to(handle.dtype)
    logger.debug(f"Mean latent from {num_samples} samples (seed={seed}), norm={float(mean.norm()):.4f}")
    return StyleVector(values=mean)


def broadcast(w: StyleVector, num_layers: int) -> ExtendedLatent:
    return ExtendedLatent(rows=w.values.unsqueeze(0).expand(num_layers, -1).clone())


def check_latent(handle: GeneratorHandle, latent: ExtendedLatent) -> None:
    expected = (handle.num_layers, handle.style_dim)
    if tuple(latent.rows.shape) != expected:
        raise ShapeMismatchError(f"latent has shape {tuple(latent.rows.shape)}, generator expects {expected}")


def check_noise(handle: GeneratorHandle, noise: NoiseBundle) -> None:
    if noise.sizes != handle.config.layer_resolutions:
        raise ShapeMismatchError(
            f"noise sizes {noise.sizes} do not match synthesis pyramid {handle.config.layer_resolutions}"
        )


def synthesize_rows(handle: GeneratorHandle, rows: torch.Tensor, noise: NoiseBundle) -> torch.Tensor:
    """
    Differentiable core of ``synthesize``: (L, D) rows to a (1, 3, H, W) tensor in [0, 1] convention.
    """
    native = handle.network.synthesis(rows.to(handle.dtype).unsqueeze(0), noise.maps)
    return (native + 1.0) / 2.0


def synthesize(handle: GeneratorHandle, latent: ExtendedLatent, noise: NoiseBundle | None = None) -> ImageBuffer:
    noise = handle.noise if noise is None else noise
    check_latent(handle, latent)
    check_noise(handle, noise)
    return ImageBuffer.from_nchw(synthesize_rows(handle, latent.rows, noise))


def generator_tensors(handle: GeneratorHandle) -> dict[str, torch.Tensor]:
    return dict(handle.network.state_dict())


def save_checkpoint(handle: GeneratorHandle, path: Path) -> None:
    config = handle.config.model_dump()
    write_checkpoint(Path(path), "generator", config, generator_tensors(handle))


def load_checkpoint(path: Path, dtype: torch.dtype = torch.float32) -> GeneratorHandle:
    raw_config, tensors = read_checkpoint(Path(path), "generator")
    try:
        config = GeneratorConfig(**raw_config)
    except ValueError as e:
        raise CheckpointError(f"Corrupt manifest in {path}: invalid generator config ({e})")

    network = _empty_network(config)
    expected = list(network.state_dict().keys())
    check_tensor_names(Path(path), expected, tensors)
    for name in expected:
        want = tuple(network.state_dict()[name].shape)
        if tuple(tensors[name].shape) != want:
            raise CheckpointError(f"Corrupt manifest in {path}: tensor {name} has shape {tuple(tensors[name].shape)}")
    network.load_state_dict(tensors, strict=True)

    handle = GeneratorHandle(config=config, network=_freeze(network, dtype), noise=make_noise(config, dtype=dtype))
    logger.info(f"Loaded generator checkpoint {path} (L={config.num_layers}, D={config.style_dim})")
    return handle
