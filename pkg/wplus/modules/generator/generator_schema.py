import math

import torch
from pydantic import BaseModel, Field, field_validator, model_validator

from wplus.core.settings import settings
from wplus.models.networks import StyleGenerator
from wplus.utils.models import TensorModel, is_power_of_two, require_finite


class GeneratorConfig(BaseModel):
    resolution: int = settings.GENERATOR_RESOLUTION
    style_dim: int = settings.GENERATOR_STYLE_DIM
    latent_dim: int | None = None
    mapping_layers: int = Field(default=settings.GENERATOR_MAPPING_LAYERS, ge=1)
    base_channels: int = Field(default=settings.GENERATOR_BASE_CHANNELS, ge=1)
    channel_cap: int = Field(default=settings.GENERATOR_CHANNEL_CAP, ge=1)
    style_decay: float = Field(default=settings.GENERATOR_STYLE_DECAY, gt=0.0, le=1.0)
    seed: int = Field(default=settings.GENERATOR_SEED, ge=0, lt=2**64)

    @model_validator(mode="after")
    def check_geometry(self):
        if self.resolution < 8 or not is_power_of_two(self.resolution):
            raise ValueError(f"resolution must be a power of two >= 8, got {self.resolution}")
        if self.style_dim <= 0:
            raise ValueError(f"style_dim must be positive, got {self.style_dim}")
        if self.latent_dim is None:
            self.latent_dim = self.style_dim
        elif self.latent_dim != self.style_dim:
            raise ValueError(f"latent_dim ({self.latent_dim}) must equal style_dim ({self.style_dim})")
        return self

    @property
    def num_layers(self) -> int:
        return 2 * (int(math.log2(self.resolution)) - 1)

    @property
    def layer_resolutions(self) -> list[int]:
        return [4 * 2 ** (i // 2) for i in range(self.num_layers)]

    def channels_at(self, resolution: int) -> int:
        return min(self.channel_cap, self.base_channels * (self.resolution // resolution))

    @property
    def layer_channels(self) -> list[int]:
        return [self.channels_at(r) for r in self.layer_resolutions]

    @property
    def style_gains(self) -> list[float]:
        return [self.style_decay ** (i // 2) for i in range(self.num_layers)]


class LatentZ(TensorModel):
    values: torch.Tensor

    @field_validator("values")
    @classmethod
    def check_values(cls, v: torch.Tensor) -> torch.Tensor:
        if v.dim() != 1:
            raise ValueError(f"LatentZ must be a vector, got shape {tuple(v.shape)}")
        return require_finite("LatentZ", v)


class StyleVector(TensorModel):
    values: torch.Tensor

    @field_validator("values")
    @classmethod
    def check_values(cls, v: torch.Tensor) -> torch.Tensor:
        if v.dim() != 1:
            raise ValueError(f"StyleVector must be a vector, got shape {tuple(v.shape)}")
        return require_finite("StyleVector", v)


class ExtendedLatent(TensorModel):
    """L x D per-layer style codes; row i feeds the i-th modulation site."""

    rows: torch.Tensor

    @field_validator("rows")
    @classmethod
    def check_rows(cls, v: torch.Tensor) -> torch.Tensor:
        if v.dim() != 2:
            raise ValueError(f"ExtendedLatent must be an L x D matrix, got shape {tuple(v.shape)}")
        return require_finite("ExtendedLatent", v)

    @property
    def num_layers(self) -> int:
        return self.rows.shape[0]

    @property
    def style_dim(self) -> int:
        return self.rows.shape[1]


class NoiseBundle(TensorModel):
    maps: list[torch.Tensor]
    seed: int

    @field_validator("maps")
    @classmethod
    def check_maps(cls, v: list[torch.Tensor]) -> list[torch.Tensor]:
        for m in v:
            if m.dim() != 4 or m.shape[:2] != (1, 1) or m.shape[2] != m.shape[3]:
                raise ValueError(f"noise maps must be (1, 1, r, r), got {tuple(m.shape)}")
        return v

    @property
    def sizes(self) -> list[int]:
        return [m.shape[-1] for m in self.maps]


class GeneratorHandle(TensorModel):
    """Loaded generator. The network is frozen; synthesis only reads it."""

    config: GeneratorConfig
    network: StyleGenerator
    noise: NoiseBundle

    @property
    def num_layers(self) -> int:
        return self.config.num_layers

    @property
    def style_dim(self) -> int:
        return self.config.style_dim

    @property
    def resolution(self) -> int:
        return self.config.resolution

    @property
    def dtype(self) -> torch.dtype:
        return self.network.synthesis.const.dtype


class ImageBuffer(TensorModel):
    """H x W x 3 RGB in [0, 1]. Values are not clamped until export."""

    pixels: torch.Tensor

    @field_validator("pixels")
    @classmethod
    def check_pixels(cls, v: torch.Tensor) -> torch.Tensor:
        if v.dim() != 3 or v.shape[2] != 3:
            raise ValueError(f"image must be H x W x 3, got shape {tuple(v.shape)}")
        return v

    @property
    def side(self) -> int:
        return self.pixels.shape[0]

    @property
    def is_square(self) -> bool:
        return self.pixels.shape[0] == self.pixels.shape[1]

    def to_nchw(self) -> torch.Tensor:
        return self.pixels.permute(2, 0, 1).unsqueeze(0)

    @classmethod
    def from_nchw(cls, tensor: torch.Tensor) -> "ImageBuffer":
        return cls(pixels=tensor[0].permute(1, 2, 0))
