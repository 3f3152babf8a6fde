import torch
from pydantic import field_validator

from wplus.utils.models import TensorModel


class ExpressionDirection(TensorModel):
    """
    Thresholded (and optionally unit-Frobenius) difference between an
    expressive and a neutral code. Rows below the threshold are exactly zero.
    """

    rows: torch.Tensor
    threshold_used: float
    normalized: bool

    @field_validator("rows")
    @classmethod
    def check_rows(cls, v: torch.Tensor) -> torch.Tensor:
        if v.dim() != 2:
            raise ValueError(f"direction must be an L x D matrix, got shape {tuple(v.shape)}")
        return v

    @property
    def active_rows(self) -> list[int]:
        return [i for i, row in enumerate(self.rows) if bool(row.abs().sum() > 0)]
