from collections import Counter
from enum import Enum
from pathlib import Path
from typing import List, Optional

import pandas as pd
from pydantic import BaseModel, Field, model_validator

from .utils import PathLike, load_json, save_json, write_csv


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"


class ManifestEntry(BaseModel):
    path: str
    label: int = Field(ge=0)
    keypoints: Optional[str] = None


class DatasetManifest(BaseModel):
    """
    List of point-cloud (or mesh) files with their category labels.

    Paths are relative to the directory holding the manifest file.
    """

    seed: int
    split: Split
    entries: List[ManifestEntry]
    categories: Optional[List[str]] = None

    @model_validator(mode="after")
    def _check_entries(self) -> "DatasetManifest":
        counts = Counter(entry.path for entry in self.entries)
        duplicates = sorted(path for path, count in counts.items() if count > 1)
        if duplicates:
            raise ValueError(f"duplicate manifest path: {duplicates[0]}")

        labels = sorted({entry.label for entry in self.entries})
        if labels and labels != list(range(len(labels))):
            raise ValueError(f"category labels must be contiguous from 0, got {labels}")
        if self.categories is not None and labels and len(self.categories) < len(labels):
            raise ValueError("fewer category names than labels")
        return self

    @property
    def num_classes(self) -> int:
        return len({entry.label for entry in self.entries})

    def label_of(self, category: str) -> int:
        if not self.categories or category not in self.categories:
            raise ValueError(f"unknown category {category!r}; known: {self.categories}")
        return self.categories.index(category)

    @classmethod
    def load(cls, path: PathLike) -> "DatasetManifest":
        return cls.model_validate(load_json(path))

    def save(self, path: PathLike) -> Path:
        return save_json(self.model_dump(mode="json"), path)


class EpochRecord(BaseModel):
    epoch: int
    loss: float
    metric: float


class TrainingLog(BaseModel):
    """Per-epoch loss and held-out metric of one training run."""

    metric_name: str
    records: List[EpochRecord] = Field(default_factory=list)
    skipped_samples: int = 0

    def append(self, epoch: int, loss: float, metric: float) -> None:
        self.records.append(EpochRecord(epoch=epoch, loss=loss, metric=metric))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [record.model_dump() for record in self.records],
            columns=["epoch", "loss", "metric"],
        )

    def to_csv(self, path: PathLike) -> Path:
        return write_csv(self.to_frame(), path)
