from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import InvalidInputError
from ..utils import PathLike


@dataclass(frozen=True, eq=False)
class PointCloud:
    """N×3 surface points with an optional category label and keypoints."""

    points: np.ndarray
    category: Optional[int] = None
    keypoints: Optional[np.ndarray] = None

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3 or points.shape[0] < 1:
            raise InvalidInputError(f"point cloud must be N×3 with N ≥ 1, got shape {points.shape}")
        if not np.all(np.isfinite(points)):
            raise InvalidInputError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", points)

        if self.keypoints is not None:
            keypoints = np.array(self.keypoints, dtype=np.float64)
            if keypoints.ndim != 2 or keypoints.shape[1] != 3:
                raise InvalidInputError(f"keypoints must be M×3, got shape {keypoints.shape}")
            if not np.all(np.isfinite(keypoints)):
                raise InvalidInputError("keypoints contain non-finite coordinates")
            object.__setattr__(self, "keypoints", keypoints)

    def __len__(self) -> int:
        return self.points.shape[0]

    def with_points(self, points: np.ndarray, keypoints: Optional[np.ndarray] = None) -> "PointCloud":
        return replace(self, points=points, keypoints=keypoints if keypoints is not None else self.keypoints)


def normalize(pc: PointCloud) -> PointCloud:
    """Center on the centroid and scale so the furthest point sits at distance 1.

    Keypoints follow the same translation and scale.
    """
    centroid = pc.points.mean(axis=0)
    centered = pc.points - centroid
    scale = np.linalg.norm(centered, axis=1).max()
    if scale < 1e-12:
        raise InvalidInputError("cannot normalize a point cloud whose points all coincide")

    keypoints = None
    if pc.keypoints is not None:
        keypoints = (pc.keypoints - centroid) / scale
    return replace(pc, points=centered / scale, keypoints=keypoints)


def read_xyz(path: PathLike) -> np.ndarray:
    """Read an XYZ file: one whitespace-separated "x y z" triple per line."""
    try:
        data = np.loadtxt(path, dtype=np.float64, ndmin=2, comments="#")
    except ValueError as e:
        raise InvalidInputError(f"{path}: malformed XYZ content ({e})")
    if data.shape[0] == 0 or data.shape[1] != 3:
        raise InvalidInputError(f"{path}: expected rows of three coordinates, got shape {data.shape}")
    return data


def write_xyz(path: PathLike, points: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.asarray(points, dtype=np.float64), fmt="%.17g")
    return path
