from enum import Enum

from pydantic import BaseModel, Field, field_validator, model_validator

from wplus.core.settings import settings

REPORT_COLUMNS = ["condition", "loss_total", "loss_total_x1e5", "dist_to_mean", "steps", "seed"]
DRIFT_COLUMNS = ["round", "rmse_to_target", "rmse_to_previous"]
REGION_COLUMNS = ["condition", "masked_error", "unmasked_error"]
REFERENCE_RESOLUTION = 1024

# Published values for the released 1024px FFHQ model: (L x 1e5, distance to the mean code).
# Attached to reports for comparison only; a toy generator does not reproduce them.
FFHQ_REFERENCE = {
    "face/mean": (0.309, 30.67),
    "face/random": (0.351, 35.60),
    "translate_right": (0.782, 48.56),
    "translate_left": (0.406, 44.12),
    "zoom_out": (0.225, 38.04),
    "zoom_in": (0.718, 40.55),
    "rotate_90": (0.622, 47.21),
    "rotate_180": (0.599, 42.93),
    "non_defective": (0.204, 29.19),
}


class AffineKind(str, Enum):
    TRANSLATE_RIGHT = "translate_right"
    TRANSLATE_LEFT = "translate_left"
    ZOOM_IN = "zoom_in"
    ZOOM_OUT = "zoom_out"
    ROTATE = "rotate"


class AffineSpec(BaseModel):
    """magnitude: pixels for translations, a factor for zooms, degrees for rotations."""

    kind: AffineKind
    magnitude: float
    fill: float = Field(default=settings.AFFINE_FILL, ge=0.0, le=1.0)
    label: str | None = None

    @model_validator(mode="after")
    def check_magnitude(self):
        if self.kind in (AffineKind.ZOOM_IN, AffineKind.ZOOM_OUT) and self.magnitude <= 0:
            raise ValueError(f"zoom factor must be > 0, got {self.magnitude}")
        return self

    @property
    def condition(self) -> str:
        if self.label:
            return self.label
        if self.kind == AffineKind.ROTATE:
            return f"rotate_{self.magnitude:g}"
        return self.kind.value


class DefectSpec(BaseModel):
    rectangles: list[tuple[int, int, int, int]] = []
    fill: float = Field(default=settings.DEFECT_FILL, ge=0.0, le=1.0)
    label: str | None = None

    @field_validator("rectangles")
    @classmethod
    def check_rectangles(cls, v: list[tuple[int, int, int, int]]) -> list[tuple[int, int, int, int]]:
        for x, y, w, h in v:
            if min(x, y, w, h) < 0:
                raise ValueError(f"rectangle {(x, y, w, h)} has negative coordinates")
        return v


class StressRow(BaseModel):
    condition: str
    loss_total: float
    loss_total_x1e5: float
    dist_to_mean: float
    steps: int
    seed: int


class DriftRow(BaseModel):
    """Image RMSE of one round's reconstruction against the original target and the previous round."""

    round: int
    rmse_to_target: float
    rmse_to_previous: float


class RegionRow(BaseModel):
    """Per-pixel MSE inside and outside the occluded rectangles, against the clean image."""

    condition: str
    masked_error: float
    unmasked_error: float


class StressReport(BaseModel):
    config_hash: str
    rows: list[StressRow] = []
    references: dict[str, tuple[float, float]] = {}
    drift: list[DriftRow] = []
    regions: list[RegionRow] = []

    def row(self, condition: str) -> StressRow:
        for row in self.rows:
            if row.condition == condition:
                return row
        raise KeyError(condition)
