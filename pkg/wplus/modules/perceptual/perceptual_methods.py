from pathlib import Path

import torch
import torch.nn.functional as F
from loguru import logger

from wplus.core.exceptions import CheckpointError, InvalidArgumentError, ShapeMismatchError
from wplus.models.checkpoint import check_tensor_names, read_checkpoint, write_checkpoint
from wplus.models.networks import FeatureExtractorNetwork
from wplus.modules.generator.generator_schema import ImageBuffer
from wplus.modules.perceptual.perceptual_schema import (
    ExtractorConfig,
    FeatureExtractorHandle,
    FeaturePyramid,
    LossWeights,
)
from wplus.utils.seeding import make_generator

MIN_SIDE = 8


def _freeze(network: FeatureExtractorNetwork, dtype: torch.dtype) -> FeatureExtractorNetwork:
    return network.to(dtype).eval().requires_grad_(False)


def build_feature_extractor(config: ExtractorConfig, dtype: torch.dtype = torch.float32) -> FeatureExtractorHandle:
    """Seeded-random extractor; stands in when no pretrained classifier weights are supplied."""
    network = FeatureExtractorNetwork(config.widths, device="meta").to_empty(device="cpu")
    network.reset_parameters(make_generator(config.seed))
    logger.info(f"Built seeded feature extractor widths={config.widths}, seed={config.seed}")
    return FeatureExtractorHandle(config=config, network=_freeze(network, dtype))


def save_extractor(extractor: FeatureExtractorHandle, path: Path) -> None:
    write_checkpoint(Path(path), "extractor", extractor.config.model_dump(), dict(extractor.network.state_dict()))


def load_extractor(path: Path, dtype: torch.dtype = torch.float32) -> FeatureExtractorHandle:
    """Loads seeded or converted pretrained-classifier weights stored as ``fx.stage{j}.conv{k}.*``."""
    raw_config, tensors = read_checkpoint(Path(path), "extractor")
    try:
        config = ExtractorConfig(**raw_config)
    except ValueError as e:
        raise CheckpointError(f"Corrupt manifest in {path}: invalid extractor config ({e})")
    network = FeatureExtractorNetwork(config.widths, device="meta").to_empty(device="cpu")
    expected = network.state_dict()
    check_tensor_names(Path(path), list(expected.keys()), tensors)
    for name, tensor in expected.items():
        if tensors[name].shape != tensor.shape:
            raise CheckpointError(f"Corrupt manifest in {path}: tensor {name} has shape {tuple(tensors[name].shape)}")
    network.load_state_dict(tensors, strict=True)
    logger.info(f"Loaded feature extractor checkpoint {path}")
    return FeatureExtractorHandle(config=config, network=_freeze(network, dtype))


def resize_nchw(images: torch.Tensor, side: int) -> torch.Tensor:
    if images.shape[-1] == side and images.shape[-2] == side:
        return images
    downscale = side < images.shape[-1]
    return F.interpolate(images, size=(side, side), mode="bilinear", align_corners=False, antialias=downscale)


def resize(image: ImageBuffer, side: int) -> ImageBuffer:
    """Bilinear resize, antialiased when shrinking."""
    if side < MIN_SIDE:
        raise InvalidArgumentError(f"resize side must be >= {MIN_SIDE}, got {side}")
    return ImageBuffer.from_nchw(resize_nchw(image.to_nchw(), side))


def _check_image(image: ImageBuffer) -> None:
    if not image.is_square:
        raise ShapeMismatchError(f"feature extraction needs a square image, got {tuple(image.pixels.shape[:2])}")
    if image.side < MIN_SIDE:
        raise InvalidArgumentError(f"feature extraction needs side >= {MIN_SIDE}, got {image.side}")


def _check_same_size(a: ImageBuffer, b: ImageBuffer) -> None:
    if a.pixels.shape != b.pixels.shape:
        raise ShapeMismatchError(f"image sizes differ: {tuple(a.pixels.shape)} vs {tuple(b.pixels.shape)}")


def extract_features_nchw(extractor: FeatureExtractorHandle, images: torch.Tensor) -> FeaturePyramid:
    return FeaturePyramid(maps=list(extractor.network(images)))


def extract_features(extractor: FeatureExtractorHandle, image: ImageBuffer) -> FeaturePyramid:
    _check_image(image)
    return extract_features_nchw(extractor, image.to_nchw())


def pyramid_distance(a: FeaturePyramid, b: FeaturePyramid, weights: LossWeights) -> torch.Tensor:
    """sum_j lambda_j / N_j * ||F_j(a) - F_j(b)||^2"""
    total = None
    for fa, fb, lam, count in zip(a.maps, b.maps, weights.lambda_percept, a.counts, strict=True):
        term = (lam / count) * (fa - fb).pow(2).sum()
        total = term if total is None else total + term
    return total


def perceptual_loss(
    extractor: FeatureExtractorHandle, first: ImageBuffer, second: ImageBuffer, weights: LossWeights
) -> torch.Tensor:
    _check_same_size(first, second)
    return pyramid_distance(extract_features(extractor, first), extract_features(extractor, second), weights)


def mse_normalized(generated: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """1/N ||G - I||^2 with N = n * n * 3."""
    return (generated - target).pow(2).sum() / target.numel()


class EmbeddingLoss:
    """
    Loss against one fixed target with the target's feature pyramid cached.
    Perceptual term on copies resized to ``loss_resolution``; MSE at native size.
    """

    def __init__(self, extractor: FeatureExtractorHandle, target: ImageBuffer, weights: LossWeights):
        _check_image(target)
        self.extractor = extractor
        self.weights = weights
        self.target = target.to_nchw()
        with torch.no_grad():
            self.target_pyramid = extract_features_nchw(extractor, resize_nchw(self.target, weights.loss_resolution))

    def __call__(self, generated: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        if generated.shape != self.target.shape:
            raise ShapeMismatchError(
                f"generated image {tuple(generated.shape)} does not match target {tuple(self.target.shape)}"
            )
        pyramid = extract_features_nchw(self.extractor, resize_nchw(generated, self.weights.loss_resolution))
        percept = pyramid_distance(pyramid, self.target_pyramid, self.weights)
        mse = mse_normalized(generated, self.target)
        total = percept + self.weights.lambda_mse * mse
        return total, percept, mse


def embedding_loss(
    extractor: FeatureExtractorHandle, generated: ImageBuffer, target: ImageBuffer, weights: LossWeights
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    Returns (total, percept, mse) where total = percept + lambda_mse * mse.
    """
    _check_same_size(generated, target)
    _check_image(generated)
    return EmbeddingLoss(extractor, target, weights)(generated.to_nchw())
