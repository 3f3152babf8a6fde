import torch
from pydantic import BaseModel, ConfigDict

from wplus.core.exceptions import InvalidArgumentError


class TensorModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


def require_finite(name: str, value: torch.Tensor) -> torch.Tensor:
    if not bool(torch.isfinite(value).all()):
        raise InvalidArgumentError(f"{name} contains non-finite entries")
    return value


def is_power_of_two(value: int) -> bool:
    return value > 0 and value & (value - 1) == 0
