from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # Application settings
    APP_NAME: str = "wplus"
    APP_VERSION: str = "0.1.0"
    APP_DESCRIPTION: str = "wplus embeds images into the per-layer style latent space of a style-based generator"
    LOG_LEVEL: str = "INFO"

    # Numerics settings
    DETERMINISTIC: bool = True
    NUM_THREADS: None | int = None

    # Toy generator settings
    GENERATOR_RESOLUTION: int = 64
    GENERATOR_STYLE_DIM: int = 64
    GENERATOR_MAPPING_LAYERS: int = 3
    GENERATOR_BASE_CHANNELS: int = 8
    GENERATOR_CHANNEL_CAP: int = 64
    GENERATOR_STYLE_DECAY: float = 0.7
    GENERATOR_SEED: int = 0

    # Mean latent settings
    MEAN_LATENT_SAMPLES: int = 10000
    MEAN_LATENT_SEED: int = 0

    # Loss settings
    LOSS_RESOLUTION: int = 256
    LAMBDA_MSE: float = 1.0
    LAMBDA_PERCEPT: float = 1.0
    EXTRACTOR_WIDTHS: tuple[int, int, int, int] = (64, 64, 256, 512)
    EXTRACTOR_SEED: int = 0

    # Embedding settings
    EMBED_STEPS: int = 5000
    EMBED_LEARNING_RATE: float = 0.01
    EMBED_BETA1: float = 0.9
    EMBED_BETA2: float = 0.999
    EMBED_EPSILON: float = 1e-8
    EMBED_RECORD_EVERY: int = 10
    EMBED_SEED: int = 0

    # Latent operation settings
    EXPRESSION_THRESHOLD: float = 1.0
    MORPH_FRAMES: int = 16

    # Stress settings
    ITERATIVE_ROUNDS: int = 7
    AFFINE_FILL: float = 0.0
    DEFECT_FILL: float = 1.0

    class Config:
        env_file = ".env"
        env_prefix = "WPLUS_"
        extra = "ignore"


settings = Settings()
