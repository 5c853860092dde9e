"""
Rotation mathematics in float64: rotation matrices, axis-angle, the 6D
two-column representation, uniform sampling on S² and SO(3).
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRotationError, InvalidInputError
from .pcdata.cloud import PointCloud

ORTHO_TOL = 1e-9
UNIT_TOL = 1e-6
DEGENERATE_TOL = 1e-9


def _skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _as_vector(v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (3,):
        raise InvalidInputError(f"{name} must be a 3-vector, got shape {v.shape}")
    return v


def _check_unit(v: np.ndarray, name: str) -> None:
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > UNIT_TOL:
        raise InvalidInputError(f"{name} must be a unit vector, got norm {norm:.9g}")


@dataclass(frozen=True, eq=False)
class Rotation:
    """A 3×3 orthonormal matrix with determinant +1."""

    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=np.float64)
        if m.shape != (3, 3):
            raise InvalidInputError(f"rotation matrix must be 3×3, got shape {m.shape}")
        if not np.allclose(m.T @ m, np.eye(3), rtol=0.0, atol=ORTHO_TOL):
            raise InvalidInputError("rotation matrix is not orthonormal")
        if abs(np.linalg.det(m) - 1.0) > ORTHO_TOL:
            raise InvalidInputError(f"rotation matrix has determinant {np.linalg.det(m):.12g}, expected +1")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(np.eye(3))

    def __matmul__(self, other: "Rotation") -> "Rotation":
        return Rotation(self.m @ other.m)

    @property
    def T(self) -> "Rotation":
        return Rotation(self.m.T)

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Rotate a 3-vector or the rows of an N×3 array."""
        v = np.asarray(v, dtype=np.float64)
        return v @ self.m.T

    @property
    def angle(self) -> float:
        return rotation_to_axis_angle(self).angle


@dataclass(frozen=True, eq=False)
class AxisAngle:
    axis: np.ndarray
    angle: float

    def __post_init__(self):
        axis = _as_vector(self.axis, "axis")
        _check_unit(axis, "axis")
        angle = float(self.angle)
        if not 0.0 <= angle <= np.pi:
            raise InvalidInputError(f"angle must lie in [0, π], got {angle}")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "angle", angle)

    def as_vector(self) -> np.ndarray:
        """The four regression targets: axis followed by angle."""
        return np.append(self.axis, self.angle)


@dataclass(frozen=True, eq=False)
class SixD:
    a1: np.ndarray
    a2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a1", _as_vector(self.a1, "a1"))
        object.__setattr__(self, "a2", _as_vector(self.a2, "a2"))

    @classmethod
    def from_rotation(cls, r: Rotation) -> "SixD":
        return cls(r.m[:, 0], r.m[:, 1])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.a1, self.a2])


def axis_angle_to_rotation(aa: AxisAngle) -> Rotation:
    """Rodrigues: R = I + sin θ K + (1 − cos θ) K², K the cross-product matrix of the axis."""
    axis = aa.axis / np.linalg.norm(aa.axis)
    k = _skew(axis)
    m = np.eye(3) + np.sin(aa.angle) * k + (1.0 - np.cos(aa.angle)) * (k @ k)
    return Rotation(m)


def _perpendicular(up: np.ndarray) -> np.ndarray:
    # +x for up = ±y, otherwise up × e for the first basis vector e not parallel to up
    if abs(up[1]) > 1.0 - 1e-12:
        return np.array([1.0, 0.0, 0.0])
    for e in np.eye(3):
        p = np.cross(up, e)
        norm = np.linalg.norm(p)
        if norm > DEGENERATE_TOL:
            return p / norm
    raise DegenerateRotationError(f"no perpendicular found for {up}")


def rotation_from_up_to(target, up=(0.0, 1.0, 0.0)) -> Rotation:
    """Minimal rotation taking ``up`` onto ``target``.

    When target = -up the rotation is a half turn about a fixed perpendicular:
    +x for up = ±y, otherwise up × e for the first basis vector e not parallel
    to up (+z for up = +x, -y for up = -z).
    """
    target = _as_vector(target, "target")
    up = _as_vector(up, "up")
    _check_unit(target, "target")
    _check_unit(up, "up")
    target = target / np.linalg.norm(target)
    up = up / np.linalg.norm(up)

    v = np.cross(up, target)
    s = np.linalg.norm(v)
    c = float(up @ target)
    if s < 1e-12:
        if c > 0.0:
            return Rotation.identity()
        return axis_angle_to_rotation(AxisAngle(_perpendicular(up), np.pi))
    return axis_angle_to_rotation(AxisAngle(v / s, float(np.arctan2(s, c))))


def sample_uniform_axis(rng: np.random.Generator) -> np.ndarray:
    """Uniform direction on S² from a normalized isotropic Gaussian draw."""
    while True:
        v = rng.standard_normal(3)
        norm = np.linalg.norm(v)
        if norm >= 1e-9:
            return v / norm


def sample_axis_angle(rng: np.random.Generator) -> AxisAngle:
    """Uniform axis with an angle uniform in [0, π]."""
    axis = sample_uniform_axis(rng)
    return AxisAngle(axis, float(rng.uniform(0.0, np.pi)))


def sample_rotation(rng: np.random.Generator) -> Rotation:
    """Haar-uniform rotation: the angle density on [0, π] is (1 − cos θ)/π."""
    axis = sample_uniform_axis(rng)
    while True:
        theta = rng.uniform(0.0, np.pi)
        if rng.random() <= (1.0 - np.cos(theta)) / 2.0:
            return axis_angle_to_rotation(AxisAngle(axis, theta))


def sixd_to_rotation(s: SixD) -> Rotation:
    """Gram-Schmidt on the two columns; the third column is their cross product."""
    a1, a2 = s.a1, s.a2
    n1 = np.linalg.norm(a1)
    if n1 <= DEGENERATE_TOL:
        raise DegenerateRotationError(f"first 6D column is near zero (norm {n1:.3g})")
    if np.linalg.norm(np.cross(a1, a2)) <= DEGENERATE_TOL:
        raise DegenerateRotationError("6D columns are parallel or the second is near zero")
    c1 = a1 / n1
    u2 = a2 - (a2 @ c1) * c1
    c2 = u2 / np.linalg.norm(u2)
    c3 = np.cross(c1, c2)
    return Rotation(np.stack([c1, c2, c3], axis=1))


def rotation_to_axis_angle(r: Rotation) -> AxisAngle:
    """Inverse of axis_angle_to_rotation with angle in [0, π].

    The identity maps to axis (0, 0, 1) and angle 0.
    """
    m = r.m
    w = np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]]) / 2.0
    sin_t = np.linalg.norm(w)
    cos_t = np.clip((np.trace(m) - 1.0) / 2.0, -1.0, 1.0)
    angle = float(np.arctan2(sin_t, cos_t))

    if sin_t < 1e-12 and cos_t > 0.0:
        return AxisAngle(np.array([0.0, 0.0, 1.0]), 0.0)

    if cos_t > -0.5:
        axis = w / sin_t
    else:
        # near π the skew part vanishes; read the axis from the symmetric part
        b = (m + m.T) / 2.0 - cos_t * np.eye(3)
        column = int(np.argmax(np.diag(b)))
        axis = b[:, column] / np.sqrt(b[column, column])
        if axis @ w < 0.0:
            axis = -axis
        axis = axis / np.linalg.norm(axis)
    return AxisAngle(axis, min(max(angle, 0.0), np.pi))


def geodesic_distance(a: Rotation, b: Rotation) -> float:
    """Angle of the relative rotation aᵀb, in [0, π]."""
    rel = a.m.T @ b.m
    cos_t = np.clip((np.trace(rel) - 1.0) / 2.0, -1.0, 1.0)
    return float(np.arccos(cos_t))


def geodesic_baseline(rng: np.random.Generator, samples: int = 10000) -> float:
    """Monte-Carlo mean geodesic distance between independent uniform rotations."""
    total = 0.0
    for _ in range(samples):
        total += geodesic_distance(sample_rotation(rng), sample_rotation(rng))
    return total / samples


def apply_rotation(r: Rotation, pc: PointCloud) -> PointCloud:
    """Rotate every point (and keypoint) of a cloud, preserving order."""
    keypoints = None if pc.keypoints is None else r.apply(pc.keypoints)
    return pc.with_points(r.apply(pc.points), keypoints=keypoints)
