import torch
from loguru import logger

from wplus.core.settings import settings

_GOLDEN = 0x9E3779B97F4A7C15
_UINT64 = 2**64


def derive_seed(seed: int, stream: int) -> int:
    """Independent 64-bit seed for a named sub-stream of ``seed``."""
    return (seed + stream * _GOLDEN) % _UINT64


def make_generator(seed: int) -> torch.Generator:
    return torch.Generator(device="cpu").manual_seed(seed % _UINT64)


def configure_determinism(enabled: bool | None = None) -> bool:
    """
    Apply deterministic mode to torch. ``None`` reads ``WPLUS_DETERMINISTIC``.
    """
    enabled = settings.DETERMINISTIC if enabled is None else enabled
    torch.use_deterministic_algorithms(enabled)
    if settings.NUM_THREADS:
        torch.set_num_threads(settings.NUM_THREADS)
    logger.debug(f"Deterministic mode {'on' if enabled else 'off'}")
    return enabled
