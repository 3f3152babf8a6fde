import pytest
import torch
from typer.testing import CliRunner

from wplus.modules.embedder.embedder_schema import EmbedConfig
from wplus.modules.generator.generator_methods import build_toy_generator, save_checkpoint, with_dtype
from wplus.modules.generator.generator_schema import GeneratorConfig
from wplus.modules.perceptual.perceptual_methods import build_feature_extractor, save_extractor
from wplus.modules.perceptual.perceptual_schema import ExtractorConfig, LossWeights
from wplus.utils.seeding import configure_determinism

SMALL_WIDTHS = (8, 8, 16, 32)


@pytest.fixture(autouse=True, scope="session")
def deterministic_mode():
    configure_determinism(True)
    yield


@pytest.fixture(scope="session")
def toy_config():
    """64px toy generator, L=10, D=64"""
    return GeneratorConfig(resolution=64, style_dim=64, mapping_layers=3, base_channels=8, channel_cap=64, seed=7)


@pytest.fixture(scope="session")
def small_config():
    """16px toy generator, L=6, D=16; cheap enough for many optimisation runs"""
    return GeneratorConfig(resolution=16, style_dim=16, mapping_layers=2, base_channels=4, channel_cap=16, seed=3)


@pytest.fixture(scope="session")
def toy_handle(toy_config):
    return build_toy_generator(toy_config)


@pytest.fixture(scope="session")
def small_handle(small_config):
    return build_toy_generator(small_config)


@pytest.fixture(scope="session")
def small_handle64(small_handle):
    """Double-precision copy for finite-difference checks"""
    return with_dtype(small_handle, torch.float64)


@pytest.fixture(scope="session")
def toy_extractor():
    return build_feature_extractor(ExtractorConfig(widths=SMALL_WIDTHS, seed=11))


@pytest.fixture(scope="session")
def toy_extractor64():
    return build_feature_extractor(ExtractorConfig(widths=SMALL_WIDTHS, seed=11), dtype=torch.float64)


@pytest.fixture
def fast_weights():
    return LossWeights(loss_resolution=16)


@pytest.fixture
def fast_config(fast_weights):
    """Short mean-initialised W+ run against a small generator"""
    return EmbedConfig(steps=20, weights=fast_weights, mean_samples=256, record_every=5)


@pytest.fixture
def cli_runner():
    return CliRunner()


@pytest.fixture
def generator_dir(tmp_path, small_handle):
    path = tmp_path / "generator"
    save_checkpoint(small_handle, path)
    return path


@pytest.fixture
def extractor_dir(tmp_path, toy_extractor):
    path = tmp_path / "extractor"
    save_extractor(toy_extractor, path)
    return path
