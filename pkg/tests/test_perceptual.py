import json

import pytest
import torch
from pydantic import ValidationError
from torch import nn

from wplus.core.exceptions import CheckpointError, InvalidArgumentError, ShapeMismatchError
from wplus.modules.generator.generator_schema import ImageBuffer
from wplus.modules.perceptual.perceptual_methods import (
    EmbeddingLoss,
    build_feature_extractor,
    embedding_loss,
    extract_features,
    load_extractor,
    mse_normalized,
    perceptual_loss,
    resize,
    resize_nchw,
    save_extractor,
)
from wplus.modules.perceptual.perceptual_schema import (
    ExtractorConfig,
    FeatureExtractorHandle,
    FeaturePyramid,
    LossWeights,
)
from wplus.utils.seeding import make_generator
from tests.test_utils import assert_gradients_match, finite_difference_check


class IdentityTaps(nn.Module):
    """Every tap returns the input image unchanged"""

    def forward(self, image: torch.Tensor) -> list[torch.Tensor]:
        return [image, image, image, image]


def seeded_image(side: int, seed: int, dtype: torch.dtype = torch.float32) -> ImageBuffer:
    generator = make_generator(seed)
    return ImageBuffer(pixels=torch.rand(side, side, 3, generator=generator, dtype=torch.float32).to(dtype))


class TestExtractFeatures:
    """Test cases for the feature pyramid"""

    def test_identical_images_identical_pyramids(self, toy_extractor):
        image = seeded_image(32, seed=1)
        first = extract_features(toy_extractor, image)
        second = extract_features(toy_extractor, image)
        for a, b in zip(first.maps, second.maps):
            assert torch.equal(a, b)

    def test_spatial_sizes_for_256(self, toy_extractor):
        """Taps at full, full, 1/4 and 1/8 of the input side"""
        pyramid = extract_features(toy_extractor, seeded_image(256, seed=2))
        assert pyramid.spatial_sizes == [256, 256, 64, 32]

    def test_counts(self, toy_extractor):
        pyramid = extract_features(toy_extractor, seeded_image(32, seed=3))
        assert pyramid.counts == [8 * 32 * 32, 8 * 32 * 32, 16 * 8 * 8, 32 * 4 * 4]

    def test_default_widths(self):
        extractor = build_feature_extractor(ExtractorConfig())
        pyramid = extract_features(extractor, seeded_image(16, seed=4))
        assert [m.shape[1] for m in pyramid.maps] == [64, 64, 256, 512]

    def test_non_square_rejected(self, toy_extractor):
        image = ImageBuffer(pixels=torch.zeros(16, 32, 3))
        with pytest.raises(ShapeMismatchError):
            extract_features(toy_extractor, image)

    def test_too_small_rejected(self, toy_extractor):
        with pytest.raises(InvalidArgumentError):
            extract_features(toy_extractor, seeded_image(4, seed=0))

    def test_pyramid_needs_four_maps(self):
        with pytest.raises(ValidationError):
            FeaturePyramid(maps=[torch.zeros(1, 1, 2, 2)] * 3)

    def test_gradient_matches_finite_differences(self, toy_extractor64):
        """Stage-4 mean activation against central differences on 10 pixels"""
        image = seeded_image(16, seed=5, dtype=torch.float64).pixels

        def fn(pixels):
            return extract_features(toy_extractor64, ImageBuffer(pixels=pixels)).maps[3].mean()

        assert_gradients_match(finite_difference_check(fn, image, num_coords=10, seed=2))


class TestPerceptualLoss:
    """Test cases for the weighted feature distance"""

    def test_zero_at_identity(self, toy_extractor):
        image = seeded_image(32, seed=1)
        assert float(perceptual_loss(toy_extractor, image, image, LossWeights())) == 0.0

    def test_symmetric_and_non_negative(self, toy_extractor):
        first, second = seeded_image(32, seed=1), seeded_image(32, seed=2)
        forward = float(perceptual_loss(toy_extractor, first, second, LossWeights()))
        backward = float(perceptual_loss(toy_extractor, second, first, LossWeights()))
        assert forward > 0.0
        assert forward == pytest.approx(backward, rel=1e-6)

    def test_size_mismatch(self, toy_extractor):
        with pytest.raises(ShapeMismatchError):
            perceptual_loss(toy_extractor, seeded_image(16, 1), seeded_image(32, 1), LossWeights())

    def test_identity_features_reduce_to_mse(self):
        """A single identity stage gives (1/N) ||I1 - I2||^2"""
        stub = FeatureExtractorHandle(config=ExtractorConfig(), network=IdentityTaps())
        first, second = seeded_image(16, seed=3), seeded_image(16, seed=4)
        weights = LossWeights(lambda_percept=(1.0, 0.0, 0.0, 0.0))
        expected = (first.pixels - second.pixels).pow(2).sum() / first.pixels.numel()
        assert float(perceptual_loss(stub, first, second, weights)) == pytest.approx(float(expected), rel=1e-6)

    def test_stage_weights_scale_terms(self, toy_extractor):
        first, second = seeded_image(16, seed=5), seeded_image(16, seed=6)
        single = float(perceptual_loss(toy_extractor, first, second, LossWeights(lambda_percept=(0, 0, 0, 1))))
        doubled = float(perceptual_loss(toy_extractor, first, second, LossWeights(lambda_percept=(0, 0, 0, 2))))
        assert doubled == pytest.approx(2 * single, rel=1e-6)


class TestEmbeddingLoss:
    """Test cases for the combined perceptual and pixel loss"""

    def test_identical_images_zero(self, toy_extractor):
        image = seeded_image(32, seed=1)
        total, percept, mse = embedding_loss(toy_extractor, image, image, LossWeights(loss_resolution=32))
        assert (float(total), float(percept), float(mse)) == (0.0, 0.0, 0.0)

    def test_zero_mse_weight(self, toy_extractor):
        first, second = seeded_image(32, seed=1), seeded_image(32, seed=2)
        total, percept, _ = embedding_loss(toy_extractor, first, second, LossWeights(lambda_mse=0.0))
        assert float(total) == float(percept)

    def test_matches_term_by_term_recomputation(self, toy_extractor):
        """Default weights against an independent scripted evaluation"""
        generated, target = seeded_image(64, seed=7), seeded_image(64, seed=8)
        weights = LossWeights()
        total, percept, mse = embedding_loss(toy_extractor, generated, target, weights)

        big_generated = resize(generated, 256)
        big_target = resize(target, 256)
        expected_percept = 0.0
        for fa, fb in zip(
            extract_features(toy_extractor, big_generated).maps, extract_features(toy_extractor, big_target).maps
        ):
            expected_percept += float(((fa.double() - fb.double()) ** 2).sum()) / fa[0].numel()
        expected_mse = float(((generated.pixels.double() - target.pixels.double()) ** 2).mean())

        assert float(percept) == pytest.approx(expected_percept, rel=1e-5)
        assert float(mse) == pytest.approx(expected_mse, rel=1e-6)
        assert float(total) == pytest.approx(expected_percept + expected_mse, rel=1e-5)

    def test_doubling_mse_weight(self, toy_extractor):
        """Doubling lambda_mse adds exactly mse * lambda_mse_old"""
        first, second = seeded_image(32, seed=3), seeded_image(32, seed=4)
        base = LossWeights(lambda_mse=1.5, loss_resolution=32)
        total, _, mse = embedding_loss(toy_extractor, first, second, base)
        doubled, _, _ = embedding_loss(toy_extractor, first, second, base.model_copy(update={"lambda_mse": 3.0}))
        assert float(doubled) == pytest.approx(float(total) + 1.5 * float(mse), rel=1e-6)

    def test_resize_inside_or_before(self, toy_extractor):
        """Resizing before the call gives the same perceptual term as resizing inside it"""
        first, second = seeded_image(64, seed=5), seeded_image(64, seed=6)
        inside = EmbeddingLoss(toy_extractor, second, LossWeights(loss_resolution=32))(first.to_nchw())[1]
        before = perceptual_loss(toy_extractor, resize(first, 32), resize(second, 32), LossWeights())
        assert float(inside) == pytest.approx(float(before), rel=1e-6)

    def test_size_mismatch(self, toy_extractor):
        with pytest.raises(ShapeMismatchError):
            embedding_loss(toy_extractor, seeded_image(16, 1), seeded_image(32, 1), LossWeights())

    def test_gradient_matches_finite_differences(self, toy_extractor64):
        """Gradient wrt generated pixels on 20 coordinates"""
        target = seeded_image(16, seed=9, dtype=torch.float64)
        loss = EmbeddingLoss(toy_extractor64, target, LossWeights(loss_resolution=16))
        point = seeded_image(16, seed=10, dtype=torch.float64).to_nchw()

        def fn(generated):
            return loss(generated)[0]

        assert_gradients_match(finite_difference_check(fn, point, num_coords=20, seed=3))


class TestLossWeights:
    """Test cases for loss weight validation"""

    def test_defaults(self):
        weights = LossWeights()
        assert weights.lambda_mse == 1.0
        assert weights.lambda_percept == (1.0, 1.0, 1.0, 1.0)
        assert weights.loss_resolution == 256

    @pytest.mark.parametrize("resolution", [4, 100, 0])
    def test_invalid_resolution(self, resolution):
        with pytest.raises(ValidationError):
            LossWeights(loss_resolution=resolution)

    def test_negative_weight(self):
        with pytest.raises(ValidationError):
            LossWeights(lambda_percept=(1.0, -1.0, 1.0, 1.0))


class TestResize:
    """Test cases for the antialiased bilinear resize"""

    def test_same_side_identity(self):
        image = seeded_image(32, seed=1)
        assert torch.allclose(resize(image, 32).pixels, image.pixels, atol=1e-6)

    def test_constant_image(self):
        image = ImageBuffer(pixels=torch.full((64, 64, 3), 0.37))
        assert torch.allclose(resize(image, 16).pixels, torch.full((16, 16, 3), 0.37), atol=1e-6)
        assert torch.allclose(resize(image, 128).pixels, torch.full((128, 128, 3), 0.37), atol=1e-6)

    def test_downscale_preserves_mean(self):
        """1024 -> 256 keeps the mean pixel within 1e-3"""
        for seed in range(10):
            image = seeded_image(1024, seed=seed)
            assert abs(float(resize(image, 256).pixels.mean()) - float(image.pixels.mean())) < 1e-3

    def test_side_too_small(self):
        with pytest.raises(InvalidArgumentError):
            resize(seeded_image(16, seed=1), 4)

    def test_nchw_passthrough(self):
        images = torch.zeros(1, 3, 16, 16)
        assert resize_nchw(images, 16) is images


class TestExtractorCheckpoint:
    """Test cases for extractor save and load"""

    def test_round_trip(self, tmp_path, toy_extractor):
        save_extractor(toy_extractor, tmp_path / "fx")
        loaded = load_extractor(tmp_path / "fx")
        image = seeded_image(16, seed=1)
        for a, b in zip(extract_features(toy_extractor, image).maps, extract_features(loaded, image).maps):
            assert torch.equal(a, b)

    def test_tensor_names(self, tmp_path, toy_extractor):
        save_extractor(toy_extractor, tmp_path / "fx")
        manifest = json.loads((tmp_path / "fx" / "manifest.json").read_text())
        assert "fx.stage1.conv1.weight" in manifest["tensors"]
        assert "fx.stage3.conv2.bias" in manifest["tensors"]
        assert "fx.stage4.conv2.weight" in manifest["tensors"]

    def test_generator_checkpoint_is_not_an_extractor(self, generator_dir):
        with pytest.raises(CheckpointError):
            load_extractor(generator_dir)
