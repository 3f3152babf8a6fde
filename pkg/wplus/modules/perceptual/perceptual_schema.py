import torch
from pydantic import BaseModel, Field, field_validator
from torch import nn

from wplus.core.settings import settings
from wplus.utils.models import TensorModel, is_power_of_two

NUM_TAPS = 4


class ExtractorConfig(BaseModel):
    widths: tuple[int, int, int, int] = settings.EXTRACTOR_WIDTHS
    seed: int = Field(default=settings.EXTRACTOR_SEED, ge=0, lt=2**64)

    @field_validator("widths")
    @classmethod
    def check_widths(cls, v: tuple[int, int, int, int]) -> tuple[int, int, int, int]:
        if any(c <= 0 for c in v):
            raise ValueError(f"extractor widths must be positive, got {v}")
        return v


class FeatureExtractorHandle(TensorModel):
    config: ExtractorConfig
    network: nn.Module

    @property
    def dtype(self) -> torch.dtype:
        return next(self.network.parameters(), torch.empty(0)).dtype


class FeaturePyramid(TensorModel):
    maps: list[torch.Tensor]

    @field_validator("maps")
    @classmethod
    def check_maps(cls, v: list[torch.Tensor]) -> list[torch.Tensor]:
        if len(v) != NUM_TAPS:
            raise ValueError(f"a feature pyramid has exactly {NUM_TAPS} maps, got {len(v)}")
        return v

    @property
    def counts(self) -> list[int]:
        """N_j: scalars per map (channels x height x width)."""
        return [m[0].numel() for m in self.maps]

    @property
    def spatial_sizes(self) -> list[int]:
        return [m.shape[-1] for m in self.maps]


class LossWeights(BaseModel):
    lambda_mse: float = Field(default=settings.LAMBDA_MSE, ge=0.0)
    lambda_percept: tuple[float, float, float, float] = (settings.LAMBDA_PERCEPT,) * NUM_TAPS
    loss_resolution: int = settings.LOSS_RESOLUTION

    @field_validator("lambda_percept")
    @classmethod
    def check_lambdas(cls, v: tuple[float, float, float, float]) -> tuple[float, float, float, float]:
        if any(lam < 0 for lam in v):
            raise ValueError(f"perceptual weights must be >= 0, got {v}")
        return v

    @field_validator("loss_resolution")
    @classmethod
    def check_resolution(cls, v: int) -> int:
        if v < 8 or not is_power_of_two(v):
            raise ValueError(f"loss_resolution must be a power of two >= 8, got {v}")
        return v
