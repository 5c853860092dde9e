"""
Direction sets on the unit sphere and the rotation classes they define.

K=6 uses the coordinate axes, K=18 adds the twelve axis-pair bisectors and
K=32 the icosahedron vertices plus face centers. Every other K falls back to
a golden-angle sunflower spiral.
"""

import itertools
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List

import numpy as np
import pandas as pd

from .errors import InvalidInputError, SchemaError
from .so3 import Rotation, rotation_from_up_to
from .utils import PathLike, write_csv

GOLDEN_RATIO = (1.0 + np.sqrt(5.0)) / 2.0
GOLDEN_ANGLE = 2.0 * np.pi * (1.0 - 1.0 / GOLDEN_RATIO)

_AXES = np.array(
    [
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ]
)


class Scheme(str, Enum):
    AXES6 = "axes6"
    AXES_BISECTORS18 = "axes_bisectors18"
    ICOSA32 = "icosa32"
    SUNFLOWER = "sunflower"


@dataclass(frozen=True, eq=False)
class DirectionSet:
    dirs: np.ndarray
    scheme: Scheme

    def __post_init__(self):
        dirs = np.array(self.dirs, dtype=np.float64)
        if dirs.ndim != 2 or dirs.shape[1] != 3 or dirs.shape[0] < 2:
            raise InvalidInputError(f"direction set must be K×3 with K ≥ 2, got shape {dirs.shape}")
        norms = np.linalg.norm(dirs, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise InvalidInputError("direction set contains non-unit vectors")
        if min_pairwise_angle(dirs) <= 1e-6:
            raise InvalidInputError("direction set contains repeated directions")
        dirs.setflags(write=False)
        object.__setattr__(self, "dirs", dirs)
        object.__setattr__(self, "scheme", Scheme(self.scheme))

    @property
    def k(self) -> int:
        return self.dirs.shape[0]

    def __len__(self) -> int:
        return self.k


def _normalize_rows(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _bisectors() -> np.ndarray:
    pairs = [a + b for a, b in itertools.combinations(_AXES, 2) if np.linalg.norm(a + b) > 0.5]
    return _normalize_rows(np.array(pairs))


def icosahedron_vertices() -> np.ndarray:
    """The 12 vertices (0, ±1, ±φ) and their cyclic permutations, unnormalized."""
    vertices = []
    for s1 in (1.0, -1.0):
        for s2 in (GOLDEN_RATIO, -GOLDEN_RATIO):
            base = np.array([0.0, s1, s2])
            for shift in range(3):
                vertices.append(np.roll(base, shift))
    return np.array(vertices)


def _icosahedron_directions() -> np.ndarray:
    vertices = icosahedron_vertices()
    # adjacent vertices of the (0, ±1, ±φ) icosahedron sit at distance exactly 2
    faces = [
        tri
        for tri in itertools.combinations(range(len(vertices)), 3)
        if all(abs(np.linalg.norm(vertices[i] - vertices[j]) - 2.0) < 1e-9 for i, j in itertools.combinations(tri, 2))
    ]
    centers = np.array([vertices[list(tri)].mean(axis=0) for tri in faces])
    return np.vstack([_normalize_rows(vertices), _normalize_rows(centers)])


def sunflower(k: int) -> np.ndarray:
    i = np.arange(k)
    y = 1.0 - (2.0 * i + 1.0) / k
    r = np.sqrt(1.0 - y ** 2)
    theta = i * GOLDEN_ANGLE
    return np.stack([r * np.cos(theta), y, r * np.sin(theta)], axis=1)


def build_direction_set(k: int) -> DirectionSet:
    if k < 2:
        raise InvalidInputError(f"direction sets need k ≥ 2, got {k}")
    if k == 6:
        return DirectionSet(_AXES, Scheme.AXES6)
    if k == 18:
        return DirectionSet(np.vstack([_AXES, _bisectors()]), Scheme.AXES_BISECTORS18)
    if k == 32:
        return DirectionSet(_icosahedron_directions(), Scheme.ICOSA32)
    return DirectionSet(sunflower(k), Scheme.SUNFLOWER)


def min_pairwise_angle(dirs: np.ndarray) -> float:
    dots = np.clip(dirs @ dirs.T, -1.0, 1.0)
    np.fill_diagonal(dots, -1.0)
    return float(np.arccos(dots.max()))


def rotations_for(ds: DirectionSet, up=(0.0, 1.0, 0.0)) -> List[Rotation]:
    """Rotation i sends ``up`` onto ``ds.dirs[i]``."""
    return [rotation_from_up_to(d, up) for d in ds.dirs]


def nearest_direction(ds: DirectionSet, v) -> int:
    """Index of the direction with the largest dot product; ties go to the lowest index."""
    return int(np.argmax(ds.dirs @ np.asarray(v, dtype=np.float64)))


def parse_up_axis(spec: str) -> np.ndarray:
    """Parse "x", "+y", "-z" and the like into a unit vector."""
    text = spec.strip().lower()
    sign = -1.0 if text.startswith("-") else 1.0
    name = text.lstrip("+-")
    if name not in ("x", "y", "z") or len(text) - len(name) > 1:
        raise InvalidInputError(f"up axis must be one of x, y, z with optional sign, got {spec!r}")
    v = np.zeros(3)
    v["xyz".index(name)] = sign
    return v


def to_frame(ds: DirectionSet) -> pd.DataFrame:
    return pd.DataFrame(
        {"index": np.arange(ds.k), "x": ds.dirs[:, 0], "y": ds.dirs[:, 1], "z": ds.dirs[:, 2]}
    )


def save_csv(ds: DirectionSet, path: PathLike) -> Path:
    return write_csv(to_frame(ds), path)


def load_csv(path: PathLike) -> DirectionSet:
    frame = pd.read_csv(path)
    for column in ("index", "x", "y", "z"):
        if column not in frame.columns:
            raise SchemaError(f"{path}: missing column {column!r}")
    frame = frame.sort_values("index")
    dirs = frame[["x", "y", "z"]].to_numpy(dtype=np.float64)
    scheme = Scheme.SUNFLOWER
    for k, candidate in ((6, Scheme.AXES6), (18, Scheme.AXES_BISECTORS18), (32, Scheme.ICOSA32)):
        if len(dirs) == k:
            scheme = candidate
    return DirectionSet(dirs, scheme)
