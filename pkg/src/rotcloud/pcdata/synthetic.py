"""
Synthetic shape categories in a canonical pose.

Every category is built from surface patches sampled in proportion to their
area. Canonical up is +y and each shape differs top-to-bottom so that its
orientation can be recovered from the points alone: the sphere has a cut-away
bottom cap and upper band, the cube is an open-topped box with a random
aspect, cylinders and cones are closed only at the bottom, and the torus and
capsule are squashed below.

Category parameter ranges overlap in overall extent (squat cylinders approach
plates, short capsules approach spheres, flat boxes approach plates), and each
sample is further stretched per axis and cut from one side, so a cloud's
bounding shape alone does not give away its category.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from ..errors import InvalidInputError
from .cloud import PointCloud, normalize
from .mesh import Mesh, sample_mesh

SCALE_RANGE = (0.8, 1.2)
JITTER_SIGMA = 0.01
MIN_POINTS = 64
NUM_KEYPOINTS = 10
STRETCH = 0.2
OCCLUSION = 0.25

Sampler = Callable[[np.random.Generator, int], np.ndarray]
Patch = Tuple[float, Sampler]


class Category(str, Enum):
    SPHERE = "sphere"
    CUBE = "cube"
    CYLINDER = "cylinder"
    CONE = "cone"
    TORUS = "torus"
    PYRAMID = "pyramid"
    CAPSULE = "capsule"
    PLATE = "plate"


CATEGORIES = list(Category)


@dataclass(frozen=True)
class ShapeVariation:
    """Per-sample nuisance on top of a category's own parameter ranges.

    ``stretch`` bounds the per-axis scale factors, drawn from [1 - stretch, 1 + stretch].
    ``occlusion`` bounds the fraction of the surface cut away from one horizontal side.
    """

    stretch: float = STRETCH
    occlusion: float = OCCLUSION

    def __post_init__(self):
        if not 0.0 <= self.stretch < 1.0:
            raise InvalidInputError(f"stretch must lie in [0, 1), got {self.stretch}")
        if not 0.0 <= self.occlusion < 0.5:
            raise InvalidInputError(f"occlusion must lie in [0, 0.5), got {self.occlusion}")


CANONICAL = ShapeVariation(stretch=0.0, occlusion=0.0)


def _ring(radius: float, y: float, count: int, offset: float = 0.0) -> np.ndarray:
    theta = offset + 2.0 * np.pi * np.arange(count) / count
    return np.stack([radius * np.cos(theta), np.full(count, y), radius * np.sin(theta)], axis=1)


def _from_polar(r: np.ndarray, y: np.ndarray, theta: np.ndarray) -> np.ndarray:
    return np.stack([r * np.cos(theta), y, r * np.sin(theta)], axis=1)


def _disk(radius: float, y: float, inner: float = 0.0) -> Patch:
    def sample(rng: np.random.Generator, n: int) -> np.ndarray:
        r = np.sqrt(rng.uniform(inner ** 2, radius ** 2, n))
        return _from_polar(r, np.full(n, y), rng.uniform(0.0, 2.0 * np.pi, n))

    return np.pi * (radius ** 2 - inner ** 2), sample


def _tube(radius: float, y0: float, y1: float) -> Patch:
    def sample(rng: np.random.Generator, n: int) -> np.ndarray:
        return _from_polar(np.full(n, radius), rng.uniform(y0, y1, n), rng.uniform(0.0, 2.0 * np.pi, n))

    return 2.0 * np.pi * radius * (y1 - y0), sample


def _frustum(r0: float, y0: float, r1: float, y1: float) -> Patch:
    """Lateral surface of a cone section from radius r0 at y0 to radius r1 at y1."""
    slant = np.hypot(r1 - r0, y1 - y0)

    def sample(rng: np.random.Generator, n: int) -> np.ndarray:
        # area density grows linearly with radius
        lo, hi = sorted((r0, r1))
        r = np.sqrt(rng.uniform(lo ** 2, hi ** 2, n))
        t = (r - r0) / (r1 - r0)
        return _from_polar(r, y0 + t * (y1 - y0), rng.uniform(0.0, 2.0 * np.pi, n))

    return np.pi * (r0 + r1) * slant, sample


def _sphere_zone(radius: float, y0: float, y1: float, center_y: float = 0.0, squash: float = 1.0) -> Patch:
    """Zone of a sphere between unit heights y0 < y1, optionally squashed along y."""

    def sample(rng: np.random.Generator, n: int) -> np.ndarray:
        # height is uniform on the unit sphere (Archimedes)
        y = rng.uniform(y0, y1, n)
        r = np.sqrt(np.clip(1.0 - y ** 2, 0.0, None))
        points = radius * _from_polar(r, y, rng.uniform(0.0, 2.0 * np.pi, n))
        points[:, 1] = center_y + squash * points[:, 1]
        return points

    return 2.0 * np.pi * radius ** 2 * (y1 - y0) * (1.0 + squash) / 2.0, sample


def _rect(origin, u, v) -> Patch:
    origin, u, v = (np.asarray(a, dtype=np.float64) for a in (origin, u, v))

    def sample(rng: np.random.Generator, n: int) -> np.ndarray:
        a = rng.random((n, 1))
        b = rng.random((n, 1))
        return origin + a * u + b * v

    return float(np.linalg.norm(np.cross(u, v))), sample


def _mesh_patch(mesh: Mesh) -> Patch:
    return float(mesh.face_areas().sum()), lambda rng, n: sample_mesh(mesh, n, rng).points


def _sphere(rng: np.random.Generator) -> Tuple[List[Patch], np.ndarray]:
    # bottom cap and an upper band are cut away; the two cuts balance so the centroid stays at 0
    band_top = np.sqrt(0.16 + 1.0 - 0.85 ** 2)
    patches = [_sphere_zone(1.0, -0.85, 0.4), _sphere_zone(1.0, band_top, 1.0)]
    keypoints = np.vstack(
        [
            [[0.0, 1.0, 0.0]],
            _ring(np.sqrt(1.0 - 0.85 ** 2), -0.85, 4),
            _ring(np.sqrt(1.0 - 0.4 ** 2), 0.4, 4),
            [[1.0, 0.0, 0.0]],
        ]
    )
    return patches, keypoints


def _cube(rng: np.random.Generator) -> Tuple[List[Patch], np.ndarray]:
    a, b, c = rng.uniform(0.55, 1.25, 3)
    patches = [
        _rect((-a, -b, -c), (2 * a, 0, 0), (0, 0, 2 * c)),
        _rect((-a, -b, -c), (0, 2 * b, 0), (0, 0, 2 * c)),
        _rect((a, -b, -c), (0, 2 * b, 0), (0, 0, 2 * c)),
        _rect((-a, -b, -c), (2 * a, 0, 0), (0, 2 * b, 0)),
        _rect((-a, -b, c), (2 * a, 0, 0), (0, 2 * b, 0)),
    ]
    corners = np.array([[sx * a, sy * b, sz * c] for sy in (-1, 1) for sx in (-1, 1) for sz in (-1, 1)])
    keypoints = np.vstack([corners, [[0.0, -b, 0.0], [0.0, 0.0, c]]])
    return patches, keypoints


def _cylinder(rng: np.random.Generator) -> Tuple[List[Patch], np.ndarray]:
    r = rng.uniform(0.45, 0.9)
    h = rng.uniform(0.35, 1.3)
    patches = [_tube(r, -h, h), _disk(r, -h)]
    keypoints = np.vstack([_ring(r, h, 4), _ring(r, -h, 4), [[0.0, -h, 0.0], [0.0, h, 0.0]]])
    return patches, keypoints


def _cone(rng: np.random.Generator) -> Tuple[List[Patch], np.ndarray]:
    r = rng.uniform(0.5, 1.0)
    h = rng.uniform(0.6, 1.4)
    patches = [_frustum(r, -h, 0.0, h), _disk(r, -h)]
    keypoints = np.vstack([[[0.0, h, 0.0], [0.0, -h, 0.0]], _ring(r, -h, 8)])
    return patches, keypoints


def _torus(rng: np.random.Generator) -> Tuple[List[Patch], np.ndarray]:
    major = rng.uniform(0.55, 0.85)
    minor = rng.uniform(0.15, 0.4)
    squash = 0.5

    def sample(gen: np.random.Generator, n: int) -> np.ndarray:
        # tube angle v has area density proportional to major + minor * cos(v)
        v = np.empty(0)
        while v.size < n:
            cand = gen.uniform(0.0, 2.0 * np.pi, 2 * n)
            keep = gen.random(2 * n) * (major + minor) <= major + minor * np.cos(cand)
            v = np.concatenate([v, cand[keep]])
        v = v[:n]
        y = minor * np.sin(v)
        y = np.where(y < 0.0, squash * y, y)
        return _from_polar(major + minor * np.cos(v), y, gen.uniform(0.0, 2.0 * np.pi, n))

    area = 4.0 * np.pi ** 2 * major * minor * (1.0 + squash) / 2.0
    keypoints = np.vstack(
        [
            _ring(major + minor, 0.0, 4),
            _ring(major - minor, 0.0, 4),
            [[major, minor, 0.0], [-major, minor, 0.0]],
        ]
    )
    return [(area, sample)], keypoints


def _pyramid(rng: np.random.Generator) -> Tuple[List[Patch], np.ndarray]:
    a = rng.uniform(0.6, 1.1)
    h = rng.uniform(0.9, 1.9)
    y0 = -h / 4.0
    apex = [0.0, y0 + h, 0.0]
    base = [[-a, y0, -a], [a, y0, -a], [a, y0, a], [-a, y0, a]]
    mesh = Mesh(
        vertices=np.array(base + [apex]),
        faces=np.array([[0, 1, 2], [0, 2, 3], [0, 4, 1], [1, 4, 2], [2, 4, 3], [3, 4, 0]]),
    )
    edge_mid = [[0.0, y0, -a], [a, y0, 0.0], [0.0, y0, a], [-a, y0, 0.0]]
    keypoints = np.array([apex] + base + [[0.0, y0, 0.0]] + edge_mid)
    return [_mesh_patch(mesh)], keypoints


def _capsule(rng: np.random.Generator) -> Tuple[List[Patch], np.ndarray]:
    r = rng.uniform(0.4, 0.7)
    h = rng.uniform(0.15, 0.9)
    squash = 0.4
    patches = [
        _sphere_zone(r, 0.0, 1.0, center_y=h),
        _tube(r, -h, h),
        _sphere_zone(r, -1.0, 0.0, center_y=-h, squash=squash),
    ]
    keypoints = np.vstack(
        [
            [[0.0, h + r, 0.0], [0.0, -h - squash * r, 0.0]],
            _ring(r, h, 4),
            _ring(r, -h, 4),
        ]
    )
    return patches, keypoints


def _plate(rng: np.random.Generator) -> Tuple[List[Patch], np.ndarray]:
    inner = rng.uniform(0.5, 0.8)
    outer = inner + rng.uniform(0.15, 0.4)
    rim = rng.uniform(0.1, 0.45)
    patches = [_disk(inner, 0.0), _frustum(inner, 0.0, outer, rim)]
    keypoints = np.vstack(
        [
            [[0.0, 0.0, 0.0]],
            _ring(inner, 0.0, 4),
            _ring(outer, rim, 4),
            [[(inner + outer) / 2.0, rim / 2.0, 0.0]],
        ]
    )
    return patches, keypoints


_BUILDERS = {
    Category.SPHERE: _sphere,
    Category.CUBE: _cube,
    Category.CYLINDER: _cylinder,
    Category.CONE: _cone,
    Category.TORUS: _torus,
    Category.PYRAMID: _pyramid,
    Category.CAPSULE: _capsule,
    Category.PLATE: _plate,
}


def _sample_patches(patches: List[Patch], n: int, rng: np.random.Generator) -> np.ndarray:
    areas = np.array([area for area, _ in patches])
    counts = rng.multinomial(n, areas / areas.sum())
    chunks = [sampler(rng, count) for (_, sampler), count in zip(patches, counts) if count > 0]
    points = np.concatenate(chunks, axis=0)
    return points[rng.permutation(n)]


def _occlude(points: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    # drop the points furthest along a random horizontal direction
    theta = rng.uniform(0.0, 2.0 * np.pi)
    side = np.array([np.cos(theta), 0.0, np.sin(theta)])
    keep = np.argsort(points @ side, kind="stable")[:n]
    return points[keep]


def generate_shape(
    category: Union[Category, str],
    n: int,
    rng: np.random.Generator,
    variation: Optional[ShapeVariation] = None,
) -> PointCloud:
    """Sample one normalized cloud of a synthetic category in canonical pose.

    Carries the category's 10 landmark keypoints, transformed with the points.
    ``variation`` defaults to the standard stretch and occlusion; pass
    ``CANONICAL`` for the bare category shapes.
    """
    try:
        category = Category(category)
    except ValueError:
        raise InvalidInputError(f"unknown category {category!r}; expected one of {[c.value for c in CATEGORIES]}")
    if n < MIN_POINTS:
        raise InvalidInputError(f"synthetic shapes need at least {MIN_POINTS} points, got {n}")
    variation = variation if variation is not None else ShapeVariation()

    patches, keypoints = _BUILDERS[category](rng)
    cut = rng.uniform(0.0, variation.occlusion) if variation.occlusion > 0.0 else 0.0
    points = _sample_patches(patches, int(np.ceil(n / (1.0 - cut))), rng)
    if variation.stretch > 0.0:
        stretch = rng.uniform(1.0 - variation.stretch, 1.0 + variation.stretch, 3)
        points = points * stretch
        keypoints = keypoints * stretch
    if points.shape[0] > n:
        points = _occlude(points, n, rng)
        points = points[rng.permutation(n)]

    scale = rng.uniform(*SCALE_RANGE)
    points = scale * points + rng.normal(0.0, JITTER_SIGMA, size=points.shape)
    cloud = PointCloud(points=points, category=CATEGORIES.index(category), keypoints=scale * keypoints)
    return normalize(cloud)
