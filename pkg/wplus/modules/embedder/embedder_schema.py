from enum import Enum

from pydantic import BaseModel, Field, model_validator

from wplus.core.settings import settings
from wplus.modules.generator.generator_schema import ExtendedLatent
from wplus.modules.perceptual.perceptual_schema import LossWeights
from wplus.utils.models import TensorModel


class InitStrategy(str, Enum):
    MEAN = "mean"
    RANDOM = "random"
    PROVIDED = "provided"


class LatentSpace(str, Enum):
    WPLUS = "wplus"
    W = "w"
    Z = "z"


class EmbedConfig(TensorModel):
    init_strategy: InitStrategy = InitStrategy.MEAN
    latent_space: LatentSpace = LatentSpace.WPLUS
    provided: ExtendedLatent | None = None
    steps: int = Field(default=settings.EMBED_STEPS, ge=1)
    learning_rate: float = Field(default=settings.EMBED_LEARNING_RATE, gt=0.0)
    beta1: float = Field(default=settings.EMBED_BETA1, ge=0.0, lt=1.0)
    beta2: float = Field(default=settings.EMBED_BETA2, ge=0.0, lt=1.0)
    epsilon: float = Field(default=settings.EMBED_EPSILON, gt=0.0)
    weights: LossWeights = Field(default_factory=LossWeights)
    seed: int = Field(default=settings.EMBED_SEED, ge=0, lt=2**64)
    record_every: int = Field(default=settings.EMBED_RECORD_EVERY, ge=1)
    mean_samples: int = Field(default=settings.MEAN_LATENT_SAMPLES, ge=1)
    mean_seed: int = Field(default=settings.MEAN_LATENT_SEED, ge=0, lt=2**64)
    noise_seed: int | None = None
    show_progress: bool = False

    @model_validator(mode="after")
    def check_provided(self):
        if self.init_strategy == InitStrategy.PROVIDED and self.provided is None:
            raise ValueError("init_strategy 'provided' needs a provided latent")
        return self

    def fingerprint(self) -> dict:
        """Everything that influences an embedding run, without the provided tensor."""
        data = self.model_dump(exclude={"provided", "show_progress"}, mode="json")
        if self.provided is not None:
            data["provided_shape"] = list(self.provided.rows.shape)
            data["provided_sum"] = float(self.provided.rows.double().sum())
        return data


class LossSample(BaseModel):
    step: int
    total: float
    percept: float
    mse: float
    dist_to_mean: float


class LossTrace(BaseModel):
    samples: list[LossSample] = []

    def best_so_far(self) -> list[float]:
        best = float("inf")
        values = []
        for sample in self.samples:
            best = min(best, sample.total)
            values.append(best)
        return values


class EmbedResult(TensorModel):
    latent: ExtendedLatent
    best: LossSample
    final: LossSample
    trace: LossTrace
    dist_to_mean: float = Field(ge=0.0)
    wallclock: float
