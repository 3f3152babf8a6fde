from enum import Enum

from pydantic import BaseModel, ConfigDict, Field

from wplus.core.settings import settings


class InitChoice(str, Enum):
    MEAN = "mean"
    RANDOM = "random"
    FILE = "file"


class SpaceChoice(str, Enum):
    WPLUS = "wplus"
    W = "w"
    Z = "z"


class RunConfig(BaseModel):
    """
    Keys accepted in a ``--config`` file (``key=value`` per line). Unknown keys are rejected.
    Precedence: command-line flag > config file > these defaults.
    """

    model_config = ConfigDict(extra="forbid")

    # Embedding
    init: InitChoice = InitChoice.MEAN
    space: SpaceChoice = SpaceChoice.WPLUS
    steps: int = Field(default=settings.EMBED_STEPS, ge=1)
    lr: float = Field(default=settings.EMBED_LEARNING_RATE, gt=0.0)
    beta1: float = Field(default=settings.EMBED_BETA1, ge=0.0, lt=1.0)
    beta2: float = Field(default=settings.EMBED_BETA2, ge=0.0, lt=1.0)
    epsilon: float = Field(default=settings.EMBED_EPSILON, gt=0.0)
    seed: int = Field(default=settings.EMBED_SEED, ge=0)
    record_every: int = Field(default=settings.EMBED_RECORD_EVERY, ge=1)
    mean_samples: int = Field(default=settings.MEAN_LATENT_SAMPLES, ge=1)
    mean_seed: int = Field(default=settings.MEAN_LATENT_SEED, ge=0)
    noise_seed: int | None = None

    # Loss
    lambda_mse: float = Field(default=settings.LAMBDA_MSE, ge=0.0)
    lambda_percept: float = Field(default=settings.LAMBDA_PERCEPT, ge=0.0)
    loss_resolution: int = settings.LOSS_RESOLUTION

    # Stress
    rounds: int = Field(default=settings.ITERATIVE_ROUNDS, ge=1)
    jobs: int = Field(default=1, ge=1)

    # Toy generator
    resolution: int = settings.GENERATOR_RESOLUTION
    style_dim: int = settings.GENERATOR_STYLE_DIM
    mapping_layers: int = settings.GENERATOR_MAPPING_LAYERS
    base_channels: int = settings.GENERATOR_BASE_CHANNELS
    channel_cap: int = settings.GENERATOR_CHANNEL_CAP
    style_decay: float = settings.GENERATOR_STYLE_DECAY
    generator_seed: int = settings.GENERATOR_SEED
