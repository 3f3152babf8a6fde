import pandas as pd
import pytest
import torch
from pydantic import ValidationError

from wplus.core.exceptions import InvalidArgumentError
from wplus.modules.embedder.embedder_methods import embed, iterative_embed
from wplus.modules.embedder.embedder_schema import EmbedConfig, InitStrategy
from wplus.modules.generator.generator_methods import mean_latent, synthesize
from wplus.modules.generator.generator_schema import ImageBuffer
from wplus.modules.perceptual.perceptual_schema import LossWeights
from wplus.modules.stresslab.stresslab_methods import (
    LOSS_VARIANTS,
    apply_affine,
    apply_defects,
    config_hash,
    default_defect_specs,
    defect_mask,
    image_drift,
    read_report,
    region_errors,
    run_affine_suite,
    run_conditions,
    run_defect_suite,
    run_init_suite,
    run_iterative_suite,
    run_loss_suite,
    run_noise_suite,
    run_space_suite,
    scale_pixels,
    standard_affine_specs,
    write_drift,
    write_regions,
    write_report,
)
from wplus.modules.stresslab.stresslab_schema import (
    DRIFT_COLUMNS,
    FFHQ_REFERENCE,
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
from wplus.utils.seeding import make_generator
from tests.test_utils import mixed_code, on_manifold_target


def gradient_image(side: int = 16) -> ImageBuffer:
    """Pixel (y, x) holds (x / side, y / side, 0.5)"""
    ys, xs = torch.meshgrid(torch.arange(side), torch.arange(side), indexing="ij")
    pixels = torch.stack([xs / side, ys / side, torch.full((side, side), 0.5)], dim=2)
    return ImageBuffer(pixels=pixels.to(torch.float32))


def noise_image(side: int, seed: int) -> ImageBuffer:
    return ImageBuffer(pixels=torch.rand(side, side, 3, generator=make_generator(seed)))


@pytest.fixture(scope="module")
def small_mean(small_handle):
    return mean_latent(small_handle, 256, seed=0)


@pytest.fixture
def suite_config():
    return EmbedConfig(steps=6, weights=LossWeights(loss_resolution=16), mean_samples=256, record_every=3)


@pytest.fixture
def suite_target(small_handle):
    return on_manifold_target(small_handle, mixed_code(small_handle, seed=1))


class TestApplyAffine:
    """Test cases for geometric transforms"""

    def test_translate_right_shifts_content(self):
        image = gradient_image()
        out = apply_affine(image, AffineSpec(kind=AffineKind.TRANSLATE_RIGHT, magnitude=3)).pixels
        assert torch.allclose(out[:, 3:], image.pixels[:, :-3], atol=1e-5)
        assert torch.allclose(out[:, :3], torch.zeros(16, 3, 3), atol=1e-6)

    def test_translate_left_shifts_content(self):
        image = gradient_image()
        spec = AffineSpec(kind=AffineKind.TRANSLATE_LEFT, magnitude=2, fill=1.0)
        out = apply_affine(image, spec).pixels
        assert torch.allclose(out[:, :-2], image.pixels[:, 2:], atol=1e-5)
        assert torch.allclose(out[:, -2:], torch.ones(16, 2, 3), atol=1e-5)

    def test_rotate_quarter_turns_exact(self):
        image = noise_image(16, seed=1)
        quarter = apply_affine(image, AffineSpec(kind=AffineKind.ROTATE, magnitude=90)).pixels
        half = apply_affine(image, AffineSpec(kind=AffineKind.ROTATE, magnitude=180)).pixels
        assert torch.equal(quarter, torch.rot90(image.pixels, 1, dims=(0, 1)))
        assert torch.equal(half, torch.flip(image.pixels, dims=(0, 1)))

    def test_rotate_full_turn_identity(self):
        image = noise_image(16, seed=2)
        assert torch.equal(apply_affine(image, AffineSpec(kind=AffineKind.ROTATE, magnitude=360)).pixels, image.pixels)

    def test_rotate_arbitrary_angle_keeps_size(self):
        image = noise_image(16, seed=3)
        out = apply_affine(image, AffineSpec(kind=AffineKind.ROTATE, magnitude=30)).pixels
        assert out.shape == image.pixels.shape
        assert not torch.equal(out, image.pixels)

    def test_zoom_out_pads(self):
        image = ImageBuffer(pixels=torch.full((16, 16, 3), 0.8))
        out = apply_affine(image, AffineSpec(kind=AffineKind.ZOOM_OUT, magnitude=2.0)).pixels
        assert out.shape == (16, 16, 3)
        assert torch.allclose(out[4:12, 4:12], torch.full((8, 8, 3), 0.8), atol=1e-6)
        assert torch.equal(out[:4], torch.zeros(4, 16, 3))

    def test_zoom_in_crops_centre(self):
        image = ImageBuffer(pixels=torch.full((16, 16, 3), 0.3))
        out = apply_affine(image, AffineSpec(kind=AffineKind.ZOOM_IN, magnitude=2.0)).pixels
        assert out.shape == (16, 16, 3)
        assert torch.allclose(out, torch.full((16, 16, 3), 0.3), atol=1e-6)

    def test_invalid_zoom_factor(self):
        with pytest.raises(ValidationError):
            AffineSpec(kind=AffineKind.ZOOM_IN, magnitude=0.0)

    def test_condition_names(self):
        assert AffineSpec(kind=AffineKind.ROTATE, magnitude=90).condition == "rotate_90"
        assert AffineSpec(kind=AffineKind.ZOOM_OUT, magnitude=2).condition == "zoom_out"
        assert AffineSpec(kind=AffineKind.ROTATE, magnitude=45, label="tilt").condition == "tilt"


class TestPresets:
    """Test cases for the standard condition lists"""

    def test_translation_scales_with_resolution(self):
        assert scale_pixels(140, 1024) == 140
        assert scale_pixels(160, 64) == 10

    def test_standard_affine_conditions(self):
        conditions = [spec.condition for spec in standard_affine_specs(64)]
        assert conditions == ["translate_right", "translate_left", "zoom_out", "zoom_in", "rotate_90", "rotate_180"]
        assert all(condition in FFHQ_REFERENCE for condition in conditions)

    def test_default_defects_inside_image(self):
        for spec in default_defect_specs(16):
            for x, y, w, h in spec.rectangles:
                assert x + w <= 16 and y + h <= 16


class TestDefects:
    """Test cases for occluded images"""

    def test_rectangle_filled(self):
        image = noise_image(16, seed=1)
        spec = DefectSpec(rectangles=[(2, 3, 4, 5)], fill=1.0)
        out = apply_defects(image, spec).pixels
        assert torch.equal(out[3:8, 2:6], torch.ones(5, 4, 3))
        outside = ~defect_mask(image, spec)
        assert torch.equal(out[outside], image.pixels[outside])

    def test_out_of_bounds(self):
        with pytest.raises(InvalidArgumentError):
            apply_defects(noise_image(16, seed=1), DefectSpec(rectangles=[(10, 10, 8, 2)]))

    def test_negative_rectangle(self):
        with pytest.raises(ValidationError):
            DefectSpec(rectangles=[(-1, 0, 2, 2)])

    def test_region_errors(self):
        reference = ImageBuffer(pixels=torch.zeros(4, 4, 3))
        reconstruction = ImageBuffer(pixels=torch.zeros(4, 4, 3))
        reconstruction.pixels[0, 0] = 1.0
        masked, unmasked = region_errors(reconstruction, reference, DefectSpec(rectangles=[(0, 0, 2, 2)]))
        assert masked == pytest.approx(0.25)
        assert unmasked == 0.0

    def test_image_drift(self):
        """Round 1 measures against the target; later rounds against the round before"""
        target = ImageBuffer(pixels=torch.zeros(4, 4, 3))
        half = ImageBuffer(pixels=torch.full((4, 4, 3), 0.5))
        full = ImageBuffer(pixels=torch.ones(4, 4, 3))
        rows = image_drift(target, [half, half, full])
        assert rows == [
            DriftRow(round=1, rmse_to_target=0.5, rmse_to_previous=0.5),
            DriftRow(round=2, rmse_to_target=0.5, rmse_to_previous=0.0),
            DriftRow(round=3, rmse_to_target=1.0, rmse_to_previous=0.5),
        ]


class TestSuites:
    """Test cases for the stress protocols"""

    def test_conditions_share_config(self, small_handle, toy_extractor, suite_config, suite_target, small_mean):
        """Every row of a report comes from the same configuration"""
        report = run_affine_suite(
            small_handle, toy_extractor, suite_target, suite_config, standard_affine_specs(16), mean=small_mean
        )
        assert [row.condition for row in report.rows][0] == "baseline"
        assert len(report.rows) == 7
        assert {row.steps for row in report.rows} == {6}
        assert report.config_hash == config_hash(suite_config)
        assert report.references["rotate_90"] == FFHQ_REFERENCE["rotate_90"]

    def test_empty_spec_list_baseline_only(self, small_handle, toy_extractor, suite_config, suite_target, small_mean):
        report = run_affine_suite(small_handle, toy_extractor, suite_target, suite_config, [], mean=small_mean)
        assert [row.condition for row in report.rows] == ["baseline"]

    def test_baseline_matches_plain_embed(self, small_handle, toy_extractor, suite_config, suite_target, small_mean):
        report = run_affine_suite(small_handle, toy_extractor, suite_target, suite_config, [], mean=small_mean)
        direct = embed(small_handle, toy_extractor, suite_target, suite_config, small_mean)
        row = report.row("baseline")
        assert row.loss_total == direct.best.total
        assert row.loss_total_x1e5 == pytest.approx(direct.best.total * 1e5)
        assert row.dist_to_mean == direct.dist_to_mean

    def test_concurrent_rows_match_serial(self, small_handle, toy_extractor, suite_config, suite_target, small_mean):
        conditions = [("a", suite_target), ("b", noise_image(16, seed=4)), ("c", noise_image(16, seed=5))]
        serial, _ = run_conditions(small_handle, toy_extractor, conditions, suite_config, jobs=1, mean=small_mean)
        parallel, _ = run_conditions(small_handle, toy_extractor, conditions, suite_config, jobs=3, mean=small_mean)
        assert serial == parallel

    def test_defect_suite(self, small_handle, toy_extractor, suite_config, suite_target, small_mean):
        spec = DefectSpec(rectangles=[(4, 4, 4, 4)], label="eyes")
        report = run_defect_suite(small_handle, toy_extractor, suite_target, suite_config, [spec], mean=small_mean)
        assert [row.condition for row in report.rows] == ["non_defective", "eyes"]
        assert "non_defective" in report.references
        assert [region.condition for region in report.regions] == ["eyes"]

    def test_defect_region_errors_use_clean_image(
        self, small_handle, toy_extractor, suite_config, suite_target, small_mean
    ):
        """Region errors compare the defect reconstruction with the unoccluded target"""
        spec = DefectSpec(rectangles=[(4, 4, 4, 4)], label="eyes")
        report = run_defect_suite(small_handle, toy_extractor, suite_target, suite_config, [spec], mean=small_mean)
        occluded = apply_defects(suite_target, spec)
        direct = embed(small_handle, toy_extractor, occluded, suite_config, small_mean)
        masked, unmasked = region_errors(synthesize(small_handle, direct.latent), suite_target, spec)
        assert report.regions[0] == RegionRow(condition="eyes", masked_error=masked, unmasked_error=unmasked)
        assert masked >= 0.0 and unmasked >= 0.0

    def test_iterative_suite(self, small_handle, toy_extractor, suite_config, suite_target, small_mean):
        report = run_iterative_suite(small_handle, toy_extractor, suite_target, suite_config, 3, mean=small_mean)
        assert [row.condition for row in report.rows] == ["round_1", "round_2", "round_3"]
        assert [drift.round for drift in report.drift] == [1, 2, 3]
        assert report.drift[0].rmse_to_previous == report.drift[0].rmse_to_target
        assert all(drift.rmse_to_target >= 0.0 for drift in report.drift)

    def test_iterative_drift_matches_reconstructions(
        self, small_handle, toy_extractor, suite_config, suite_target, small_mean
    ):
        report = run_iterative_suite(small_handle, toy_extractor, suite_target, suite_config, 2, mean=small_mean)
        results = iterative_embed(small_handle, toy_extractor, suite_target, suite_config, 2, mean=small_mean)
        images = [synthesize(small_handle, result.latent) for result in results]
        assert report.drift == image_drift(suite_target, images)

    def test_space_suite(self, small_handle, toy_extractor, suite_config, suite_target, small_mean):
        """Both networks, both spaces, both starts; the generator rows match plain embeddings"""
        report = run_space_suite(small_handle, toy_extractor, suite_target, suite_config, mean=small_mean)
        assert [row.condition for row in report.rows] == [
            "generator/wplus/mean",
            "generator/wplus/random",
            "generator/w/mean",
            "generator/w/random",
            "random_weights/wplus/mean",
            "random_weights/wplus/random",
            "random_weights/w/mean",
            "random_weights/w/random",
        ]
        assert report.config_hash == config_hash(suite_config)
        direct = embed(small_handle, toy_extractor, suite_target, suite_config, small_mean)
        assert report.row("generator/wplus/mean").loss_total == direct.best.total
        assert report.row("random_weights/wplus/mean").loss_total != direct.best.total

    def test_space_suite_random_weights_seed(self, small_handle, toy_extractor, suite_config, suite_target, small_mean):
        """The comparison network seed only moves the random-weights rows"""
        first = run_space_suite(
            small_handle, toy_extractor, suite_target, suite_config, mean=small_mean, random_weights_seed=5
        )
        second = run_space_suite(
            small_handle, toy_extractor, suite_target, suite_config, mean=small_mean, random_weights_seed=6
        )
        assert first.rows[:4] == second.rows[:4]
        assert first.row("random_weights/wplus/mean") != second.row("random_weights/wplus/mean")

    def test_init_suite(self, small_handle, toy_extractor, suite_config, suite_target, small_mean):
        """Two rows per target; only the initial code differs"""
        targets = [("face", suite_target), ("other", noise_image(16, seed=6))]
        report = run_init_suite(small_handle, toy_extractor, targets, suite_config, mean=small_mean)
        assert [row.condition for row in report.rows] == ["face/mean", "face/random", "other/mean", "other/random"]
        assert report.references == {"face/mean": FFHQ_REFERENCE["face/mean"], "face/random": FFHQ_REFERENCE["face/random"]}
        assert report.config_hash == config_hash(suite_config.model_copy(update={"init_strategy": InitStrategy.MEAN}))

    def test_loss_suite(self, small_handle, toy_extractor, suite_config, suite_target, small_mean):
        report = run_loss_suite(small_handle, toy_extractor, suite_target, suite_config, mean=small_mean)
        assert [row.condition for row in report.rows] == list(LOSS_VARIANTS)
        assert all(row.loss_total >= 0.0 for row in report.rows)

    def test_loss_variants(self):
        weights = LossWeights(lambda_mse=2.0, lambda_percept=(1.0, 1.0, 1.0, 3.0))
        assert LOSS_VARIANTS["percept_only"](weights).lambda_mse == 0.0
        assert LOSS_VARIANTS["mse_only"](weights).lambda_percept == (0.0, 0.0, 0.0, 0.0)
        assert LOSS_VARIANTS["single_stage"](weights).lambda_percept == (0.0, 0.0, 0.0, 3.0)

    def test_noise_suite(self, small_handle, toy_extractor, suite_config, suite_target, small_mean):
        report = run_noise_suite(small_handle, toy_extractor, suite_target, suite_config, [1, 2], mean=small_mean)
        assert [row.condition for row in report.rows] == ["noise_1", "noise_2"]
        assert report.rows[0].loss_total != report.rows[1].loss_total


class TestReport:
    """Test cases for report CSV files"""

    @pytest.fixture
    def report(self):
        rows = [
            StressRow(condition="baseline", loss_total=1.25e-5, loss_total_x1e5=1.25, dist_to_mean=3.5, steps=10, seed=0),
            StressRow(condition="rotate_90", loss_total=2e-5, loss_total_x1e5=2.0, dist_to_mean=4.0, steps=10, seed=0),
        ]
        return StressReport(config_hash="ab" * 32, rows=rows, references={"rotate_90": FFHQ_REFERENCE["rotate_90"]})

    def test_header_and_columns(self, tmp_path, report):
        write_report(report, tmp_path / "report.csv")
        lines = (tmp_path / "report.csv").read_text().splitlines()
        assert lines[0] == f"# config_sha256={'ab' * 32}"
        assert lines[1] == "# reference rotate_90 loss_total_x1e5=0.622 dist_to_mean=47.21"
        assert lines[2] == ",".join(REPORT_COLUMNS)

    def test_round_trip(self, tmp_path, report):
        write_report(report, tmp_path / "report.csv")
        assert read_report(tmp_path / "report.csv") == report

    def test_wrong_columns(self, tmp_path):
        (tmp_path / "report.csv").write_text("# config_sha256=00\ncondition,loss\nbaseline,1.0\n")
        with pytest.raises(InvalidArgumentError):
            read_report(tmp_path / "report.csv")

    def test_missing_condition(self, report):
        with pytest.raises(KeyError):
            report.row("zoom_in")

    def test_drift_and_region_tables(self, tmp_path, report):
        report = report.model_copy(
            update={
                "drift": [DriftRow(round=1, rmse_to_target=0.25, rmse_to_previous=0.25)],
                "regions": [RegionRow(condition="defect_0", masked_error=0.5, unmasked_error=0.125)],
            }
        )
        write_drift(report, tmp_path / "drift.csv")
        write_regions(report, tmp_path / "regions.csv")
        drift = pd.read_csv(tmp_path / "drift.csv")
        regions = pd.read_csv(tmp_path / "regions.csv")
        assert list(drift.columns) == DRIFT_COLUMNS
        assert list(regions.columns) == REGION_COLUMNS
        assert drift.loc[0, "rmse_to_previous"] == 0.25
        assert regions.loc[0, "condition"] == "defect_0"
        assert regions.loc[0, "masked_error"] == 0.5


@pytest.mark.slow
@pytest.mark.integration
class TestStressBehaviour:
    """Directional outcomes of the protocols on on-manifold toy targets"""

    @pytest.fixture
    def long_config(self):
        return EmbedConfig(steps=1000, weights=LossWeights(loss_resolution=16), mean_samples=1024, record_every=100)

    def test_mean_init_stays_closer_to_mean(self, small_handle, toy_extractor, small_mean):
        config = EmbedConfig(steps=300, weights=LossWeights(loss_resolution=16), record_every=100)
        targets = [(f"t{seed}", on_manifold_target(small_handle, mixed_code(small_handle, seed))) for seed in range(5)]
        report = run_init_suite(small_handle, toy_extractor, targets, config, mean=small_mean)
        closer = sum(
            report.row(f"t{seed}/mean").dist_to_mean <= report.row(f"t{seed}/random").dist_to_mean for seed in range(5)
        )
        assert closer >= 4

    def test_transformed_targets_fit_worse(self, small_handle, toy_extractor, long_config):
        for seed in range(3):
            target = on_manifold_target(small_handle, mixed_code(small_handle, seed=10 + seed))
            report = run_affine_suite(small_handle, toy_extractor, target, long_config, standard_affine_specs(16))
            baseline = report.row("baseline").loss_total
            assert all(row.loss_total >= baseline for row in report.rows[1:])

    def test_every_round_improves(self, small_handle, toy_extractor, suite_target, small_mean):
        """Seven rounds, each ending below its own starting loss and below the first round's start"""
        config = EmbedConfig(steps=50, weights=LossWeights(loss_resolution=16), record_every=10)
        results = iterative_embed(small_handle, toy_extractor, suite_target, config, mean=small_mean)
        assert len(results) == 7
        first_start = results[0].trace.samples[0].total
        for result in results:
            assert result.best.total < result.trace.samples[0].total
            assert result.best.total <= first_start
        drift = image_drift(suite_target, [synthesize(small_handle, result.latent) for result in results])
        assert len(drift) == 7
        for before, after in zip(drift, drift[1:]):
            assert after.rmse_to_previous <= after.rmse_to_target + before.rmse_to_target + 1e-6

    def test_defects_fit_worse(self, small_handle, toy_extractor, long_config):
        """Occlusions pull the code away from the mean and leave the occluded region worst"""
        for seed in range(3):
            target = on_manifold_target(small_handle, mixed_code(small_handle, seed=20 + seed))
            report = run_defect_suite(small_handle, toy_extractor, target, long_config, default_defect_specs(16))
            baseline = report.row("non_defective")
            for region in report.regions:
                row = report.row(region.condition)
                assert row.loss_total >= baseline.loss_total
                assert row.dist_to_mean >= baseline.dist_to_mean
                assert region.masked_error >= region.unmasked_error
