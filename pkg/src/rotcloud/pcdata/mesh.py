"""
Triangle meshes: OFF/OBJ parsing and area-weighted surface sampling.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Tuple

import numpy as np

from ..errors import InvalidInputError, MeshParseError
from ..utils import PathLike
from .cloud import PointCloud


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=np.float64)
        faces = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise InvalidInputError(f"mesh vertices must be V×3, got shape {vertices.shape}")
        if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise InvalidInputError(f"face index out of range for {len(vertices)} vertices")
        repeated = (faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 0] == faces[:, 2])
        if np.any(repeated):
            raise InvalidInputError(f"degenerate face with repeated indices: {faces[np.argmax(repeated)].tolist()}")
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "faces", faces)

    def face_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.faces[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def sample_mesh(m: Mesh, n: int, rng: np.random.Generator) -> PointCloud:
    """Sample n points uniformly over the surface area of a mesh."""
    if n < 1:
        raise InvalidInputError(f"sample count must be ≥ 1, got {n}")
    if len(m.faces) == 0:
        raise InvalidInputError("mesh has no faces")
    areas = m.face_areas()
    total = areas.sum()
    if total <= 0.0:
        raise InvalidInputError("mesh has zero total surface area")

    chosen = rng.choice(len(areas), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    # barycentric weights (1 - √u, √u(1 - v), √u·v) are uniform over the triangle
    weights = np.stack([1.0 - r1, r1 * (1.0 - r2), r1 * r2], axis=1)
    corners = m.vertices[m.faces[chosen]]
    points = np.einsum("nk,nkd->nd", weights, corners)
    return PointCloud(points=points)


def _content_lines(path: Path) -> Iterator[Tuple[int, List[str]]]:
    with open(path, "r", encoding="utf-8", errors="replace") as f:
        for number, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield number, line.split()


def _fan(indices: List[int]) -> List[List[int]]:
    return [[indices[0], indices[i], indices[i + 1]] for i in range(1, len(indices) - 1)]


def _parse_float(path: Path, number: int, token: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise MeshParseError(str(path), number, f"non-numeric token {token!r}")


def _parse_int(path: Path, number: int, token: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise MeshParseError(str(path), number, f"non-integer token {token!r}")


def load_off(path: PathLike) -> Mesh:
    """Parse an OFF file, fan-triangulating polygons.

    Accepts the "OFF<counts>" single-line header some repositories ship with.
    """
    path = Path(path)
    lines = _content_lines(path)

    try:
        number, tokens = next(lines)
    except StopIteration:
        raise MeshParseError(str(path), 1, "empty file, expected OFF header")
    if not tokens[0].startswith("OFF"):
        raise MeshParseError(str(path), number, f"expected OFF header, got {tokens[0]!r}")

    count_tokens = tokens[1:]
    if tokens[0] != "OFF":
        count_tokens = [tokens[0][3:]] + count_tokens
    if not count_tokens:
        try:
            number, count_tokens = next(lines)
        except StopIteration:
            raise MeshParseError(str(path), number, "missing vertex/face counts")
    if len(count_tokens) < 2:
        raise MeshParseError(str(path), number, "header needs vertex and face counts")
    n_vertices = _parse_int(path, number, count_tokens[0])
    n_faces = _parse_int(path, number, count_tokens[1])
    if n_vertices < 0 or n_faces < 0:
        raise MeshParseError(str(path), number, "negative element count")

    vertices = []
    for _ in range(n_vertices):
        try:
            number, tokens = next(lines)
        except StopIteration:
            raise MeshParseError(str(path), number, f"expected {n_vertices} vertices, found {len(vertices)}")
        if len(tokens) < 3:
            raise MeshParseError(str(path), number, "vertex line needs three coordinates")
        vertices.append([_parse_float(path, number, t) for t in tokens[:3]])

    faces = []
    for read in range(n_faces):
        try:
            number, tokens = next(lines)
        except StopIteration:
            raise MeshParseError(str(path), number, f"expected {n_faces} faces, found {read}")
        count = _parse_int(path, number, tokens[0])
        if count < 3 or len(tokens) < count + 1:
            raise MeshParseError(str(path), number, f"face needs at least 3 indices and {count} listed")
        indices = [_parse_int(path, number, t) for t in tokens[1 : count + 1]]
        for index in indices:
            if index < 0 or index >= n_vertices:
                raise MeshParseError(str(path), number, f"face index {index} out of range for {n_vertices} vertices")
        if len(set(indices)) < len(indices):
            raise MeshParseError(str(path), number, "face repeats a vertex index")
        faces.extend(_fan(indices))

    return Mesh(vertices=np.array(vertices, dtype=np.float64).reshape(-1, 3), faces=np.array(faces, dtype=np.int64))


def load_obj(path: PathLike) -> Mesh:
    """Parse the vertex and face records of a Wavefront OBJ file."""
    path = Path(path)
    vertices = []
    faces = []
    for number, tokens in _content_lines(path):
        tag = tokens[0]
        if tag == "v":
            if len(tokens) < 4:
                raise MeshParseError(str(path), number, "vertex line needs three coordinates")
            vertices.append([_parse_float(path, number, t) for t in tokens[1:4]])
        elif tag == "f":
            if len(tokens) < 4:
                raise MeshParseError(str(path), number, "face needs at least 3 vertices")
            indices = []
            for token in tokens[1:]:
                # "v", "v/vt", "v//vn" and "v/vt/vn" all start with the vertex index
                index = _parse_int(path, number, token.split("/", 1)[0])
                if index < 0:
                    index = len(vertices) + index
                else:
                    index -= 1
                if index < 0 or index >= len(vertices):
                    raise MeshParseError(str(path), number, f"face index {token} out of range for {len(vertices)} vertices")
                indices.append(index)
            if len(set(indices)) < len(indices):
                raise MeshParseError(str(path), number, "face repeats a vertex index")
            faces.extend(_fan(indices))

    if not vertices:
        raise MeshParseError(str(path), 1, "no vertex records found")
    return Mesh(vertices=np.array(vertices, dtype=np.float64), faces=np.array(faces, dtype=np.int64).reshape(-1, 3))


def load_mesh(path: PathLike) -> Mesh:
    suffix = Path(path).suffix.lower()
    if suffix == ".off":
        return load_off(path)
    if suffix == ".obj":
        return load_obj(path)
    raise InvalidInputError(f"unsupported mesh format {suffix!r} for {path}")
