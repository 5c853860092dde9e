from enum import Enum
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .schemas import Split


class Settings(BaseSettings):
    # Runtime defaults, overridden by command line flags
    SEED: int = 0
    THREADS: int = 1
    LOG_LEVEL: str = "INFO"
    UP_AXIS: str = "y"

    model_config = SettingsConfigDict(
        env_prefix="ROTCLOUD_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )


def get_settings() -> Settings:
    """Read settings from the environment as it is right now."""
    return Settings()


class PretextTask(str, Enum):
    CLASSIFY = "classify"
    AXIS_ANGLE = "axisangle"
    SIXD = "sixd"


class OptimizerName(str, Enum):
    SGD = "sgd"
    ADAM = "adam"


class FitConfig(BaseModel):
    """Knobs shared by every gradient-trained stage."""

    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(30, ge=0)
    batch_size: int = Field(32, gt=0)
    learning_rate: float = Field(1e-3, gt=0)
    optimizer: OptimizerName = OptimizerName.ADAM
    seed: int = 0
    holdout_fraction: float = Field(0.1, ge=0.0, lt=1.0)
    widths: List[int] = Field(default_factory=lambda: [64, 128, 256])
    head_hidden: int = Field(128, gt=0)
    threads: int = Field(1, gt=0)

    @field_validator("widths")
    @classmethod
    def _positive_widths(cls, value: List[int]) -> List[int]:
        if not value or any(w <= 0 for w in value):
            raise ValueError("widths must be a non-empty list of positive integers")
        return value


class TrainConfig(FitConfig):
    task: PretextTask = PretextTask.CLASSIFY
    k: int = Field(18, ge=2)
    up_axis: str = "y"
    # Gaussian jitter added to every pretext sample; off by default
    jitter: float = Field(0.0, ge=0.0)

    @field_validator("up_axis")
    @classmethod
    def _axis_name(cls, value: str) -> str:
        text = value.strip().lower()
        if len(text) > 2 or text.lstrip("+-") not in ("x", "y", "z"):
            raise ValueError(f"up axis must be x, y or z with an optional sign, got {value!r}")
        return text


class KeypointConfig(FitConfig):
    epochs: int = Field(60, ge=0)
    batch_size: int = Field(16, gt=0)
    category: Optional[str] = "cube"


class SVMConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lam: float = Field(1e-3, gt=0)
    iters: int = Field(2000, gt=0)


DEFAULT_SWEEP_FRACTIONS = [0.01, 0.05, 0.1, 0.25, 0.5, 1.0]
DEFAULT_KEYPOINT_FRACTIONS = [0.25, 0.5, 1.0]

# Option fields that fall back to ROTCLOUD_* settings when neither a flag nor the config file sets them
ENV_FALLBACKS = {"seed": "SEED", "threads": "THREADS", "up_axis": "UP_AXIS"}


class CommandOptions(BaseModel):
    """Fully resolved options of one CLI command."""

    model_config = ConfigDict(extra="forbid")

    threads: int = Field(1, gt=0)


class GenDataOptions(CommandOptions):
    out: str
    categories: int = Field(8, ge=1, le=8)
    train: int = Field(200, ge=1)
    test: int = Field(50, ge=1)
    points: int = Field(1024, ge=64)
    seed: int = 0
    stretch: float = Field(0.2, ge=0.0, lt=1.0)
    occlusion: float = Field(0.25, ge=0.0, lt=0.5)


class IngestOptions(CommandOptions):
    root: str
    out: str
    points: int = Field(1024, ge=1)
    seed: int = 0


class PretrainOptions(TrainConfig):
    data: str
    out: str
    log: Optional[str] = None
    points: int = Field(1024, ge=1)


class EvalRotationOptions(CommandOptions):
    model: str
    data: str
    split: Split = Split.TEST
    seed: int = 0
    all_directions: bool = False
    points: int = Field(1024, ge=1)
    out_dir: str = "."


class DirsOptions(CommandOptions):
    out: str
    k: int = Field(18, ge=2)


class ExtractOptions(CommandOptions):
    model: str
    data: str
    out: str
    split: Split = Split.TRAIN
    points: int = Field(1024, ge=1)


class SVMOptions(SVMConfig):
    train: str
    test: str
    train2: Optional[str] = None
    test2: Optional[str] = None
    threads: int = Field(1, gt=0)
    out_dir: str = "."

    @model_validator(mode="after")
    def _paired_second_source(self) -> "SVMOptions":
        if (self.train2 is None) != (self.test2 is None):
            raise ValueError("train2 and test2 must be given together")
        return self


class SweepOptions(SVMConfig):
    out: str
    fractions: List[float] = Field(default_factory=lambda: list(DEFAULT_SWEEP_FRACTIONS))
    train: Optional[str] = None
    test: Optional[str] = None
    model: Optional[str] = None
    data: Optional[str] = None
    seed: int = 0
    points: int = Field(1024, ge=1)
    threads: int = Field(1, gt=0)

    @model_validator(mode="after")
    def _one_feature_source(self) -> "SweepOptions":
        from_files = self.train is not None and self.test is not None
        from_model = self.model is not None and self.data is not None
        if from_files == from_model:
            raise ValueError("give either train and test feature files or a model and a data directory")
        if not self.fractions or any(not 0.0 < f <= 1.0 for f in self.fractions):
            raise ValueError("fractions must be a non-empty list in (0, 1]")
        return self


class KeypointOptions(KeypointConfig):
    data: str
    out: str
    init: Optional[str] = None
    log: Optional[str] = None
    points: int = Field(1024, ge=1)


class PCKOptions(CommandOptions):
    model: str
    data: str
    out: str
    split: Split = Split.TEST
    snap: bool = False
    category: Optional[str] = None
    thresholds: Optional[List[float]] = None
    points: int = Field(1024, ge=1)


class KeypointSweepOptions(KeypointConfig):
    data: str
    out: str
    init: Optional[str] = None
    fractions: List[float] = Field(default_factory=lambda: list(DEFAULT_KEYPOINT_FRACTIONS))
    snap: bool = False
    points: int = Field(1024, ge=1)


class PlotOptions(CommandOptions):
    kind: Literal["pck", "sweep", "table1", "log"]
    inputs: List[str] = Field(min_length=1)
    out: str
    title: Optional[str] = None
