"""
Dataset directories: manifests plus XYZ (or mesh) files.

A dataset directory holds ``train.json`` and ``test.json`` manifests whose
entry paths are relative to the directory.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from ..errors import InvalidInputError, MeshParseError
from ..schemas import DatasetManifest, ManifestEntry, Split
from ..utils import PathLike, make_rng, parallel_map
from .cloud import PointCloud, normalize, read_xyz, write_xyz
from .mesh import load_mesh, sample_mesh
from .synthetic import CATEGORIES, ShapeVariation, generate_shape

MESH_SUFFIXES = (".off", ".obj")
DEFAULT_POINTS = 1024


@dataclass
class Dataset:
    """A loaded manifest with its normalized clouds, in manifest order."""

    manifest: DatasetManifest
    clouds: List[PointCloud]

    def __len__(self) -> int:
        return len(self.clouds)

    @property
    def labels(self) -> np.ndarray:
        return np.array([entry.label for entry in self.manifest.entries], dtype=np.int64)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        indices = list(indices)
        manifest = self.manifest.model_copy(update={"entries": [self.manifest.entries[i] for i in indices]})
        return Dataset(manifest=manifest, clouds=[self.clouds[i] for i in indices])

    def of_label(self, label: int) -> "Dataset":
        return self.subset([i for i, entry in enumerate(self.manifest.entries) if entry.label == label])


def manifest_path(data_dir: PathLike, split: Split) -> Path:
    return Path(data_dir) / f"{Split(split).value}.json"


def _read_entry(root: Path, manifest: DatasetManifest, index: int, n_points: int) -> PointCloud:
    entry = manifest.entries[index]
    path = root / entry.path
    try:
        if path.suffix.lower() in MESH_SUFFIXES:
            points = sample_mesh(load_mesh(path), n_points, make_rng(manifest.seed + index)).points
        else:
            points = read_xyz(path)
        keypoints = read_xyz(root / entry.keypoints) if entry.keypoints else None
        return normalize(PointCloud(points=points, category=entry.label, keypoints=keypoints))
    except MeshParseError:
        raise
    except InvalidInputError as e:
        if str(path) in str(e):
            raise
        raise InvalidInputError(f"{path}: {e}") from e


def load_dataset(path: PathLike, threads: int = 1, n_points: int = DEFAULT_POINTS) -> Dataset:
    """Load every entry of a manifest file, normalizing each cloud.

    Mesh entries are sampled on load with seed ``manifest.seed + index``.
    """
    path = Path(path)
    manifest = DatasetManifest.load(path)
    root = path.parent
    clouds = parallel_map(
        lambda i: _read_entry(root, manifest, i, n_points),
        range(len(manifest.entries)),
        threads,
    )
    logger.debug(f"Loaded {len(clouds)} clouds from {path}")
    return Dataset(manifest=manifest, clouds=clouds)


def load_split(data_dir: PathLike, split: Split, threads: int = 1, n_points: int = DEFAULT_POINTS) -> Dataset:
    path = manifest_path(data_dir, split)
    if not path.exists():
        raise InvalidInputError(f"no {Split(split).value} manifest in {data_dir} (expected {path})")
    return load_dataset(path, threads=threads, n_points=n_points)


def _write_sample(out_dir: Path, split: Split, index: int, cloud: PointCloud) -> ManifestEntry:
    stem = f"{split.value}/{index:06d}"
    write_xyz(out_dir / f"{stem}.xyz", cloud.points)
    keypoints = None
    if cloud.keypoints is not None:
        keypoints = f"{stem}.kp.xyz"
        write_xyz(out_dir / keypoints, cloud.keypoints)
    return ManifestEntry(path=f"{stem}.xyz", label=cloud.category, keypoints=keypoints)


def _generate_split(
    out_dir: Path,
    split: Split,
    seed: int,
    count: int,
    n_categories: int,
    points: int,
    threads: int,
    variation: ShapeVariation,
) -> DatasetManifest:
    def make(index: int) -> ManifestEntry:
        category = CATEGORIES[index % n_categories]
        cloud = generate_shape(category, points, make_rng(seed + index), variation)
        return _write_sample(out_dir, split, index, cloud)

    entries = parallel_map(make, range(count), threads)
    manifest = DatasetManifest(
        seed=seed,
        split=split,
        entries=entries,
        categories=[c.value for c in CATEGORIES[:n_categories]],
    )
    manifest.save(manifest_path(out_dir, split))
    return manifest


def generate_dataset(
    out_dir: PathLike,
    categories: int = 8,
    train: int = 200,
    test: int = 50,
    points: int = DEFAULT_POINTS,
    seed: int = 0,
    threads: int = 1,
    variation: Optional[ShapeVariation] = None,
) -> Tuple[DatasetManifest, DatasetManifest]:
    """Write a synthetic dataset with ``train`` and ``test`` clouds per category.

    Entry i of a split has category ``i % categories``; the test split is seeded
    after the last training entry so no two clouds share a seed.
    """
    if not 1 <= categories <= len(CATEGORIES):
        raise InvalidInputError(f"categories must be in [1, {len(CATEGORIES)}], got {categories}")
    if train < 1 or test < 1:
        raise InvalidInputError("train and test counts per category must be ≥ 1")

    variation = variation if variation is not None else ShapeVariation()
    out_dir = Path(out_dir)
    n_train = categories * train
    train_manifest = _generate_split(out_dir, Split.TRAIN, seed, n_train, categories, points, threads, variation)
    test_manifest = _generate_split(
        out_dir, Split.TEST, seed + n_train, categories * test, categories, points, threads, variation
    )
    logger.info(
        f"Generated {len(train_manifest.entries)} train and {len(test_manifest.entries)} test clouds "
        f"({categories} categories, {points} points) in {out_dir}"
    )
    return train_manifest, test_manifest


def _scan_meshes(root: Path) -> Tuple[List[str], Dict[Split, List[Tuple[Path, int]]]]:
    categories = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not categories:
        raise InvalidInputError(f"no category directories under {root}")
    files: Dict[Split, List[Tuple[Path, int]]] = {Split.TRAIN: [], Split.TEST: []}
    for label, name in enumerate(categories):
        for split in Split:
            found = sorted(
                p for p in (root / name / split.value).glob("*") if p.suffix.lower() in MESH_SUFFIXES
            )
            if not found:
                raise InvalidInputError(f"category {name!r} has no {split.value} meshes under {root / name}")
            files[split].extend((p, label) for p in found)
    return categories, files


def ingest(
    root: PathLike,
    out_dir: PathLike,
    points: int = DEFAULT_POINTS,
    seed: int = 0,
    threads: int = 1,
) -> Tuple[DatasetManifest, DatasetManifest]:
    """Convert a ``ROOT/<category>/{train,test}/*.off|*.obj`` tree into an XYZ dataset."""
    root = Path(root)
    out_dir = Path(out_dir)
    if not root.is_dir():
        raise InvalidInputError(f"mesh root is not a directory: {root}")
    categories, files = _scan_meshes(root)

    manifests = {}
    split_seed = seed
    for split in Split:
        split_files = files[split]

        def convert(index: int, split=split, split_files=split_files, split_seed=split_seed) -> ManifestEntry:
            path, label = split_files[index]
            cloud = sample_mesh(load_mesh(path), points, make_rng(split_seed + index))
            cloud = normalize(PointCloud(points=cloud.points, category=label))
            return _write_sample(out_dir, split, index, cloud)

        entries = parallel_map(convert, range(len(split_files)), threads)
        manifests[split] = DatasetManifest(seed=split_seed, split=split, entries=entries, categories=categories)
        manifests[split].save(manifest_path(out_dir, split))
        logger.info(f"Ingested {len(entries)} {split.value} meshes from {root}")
        split_seed += len(split_files)

    return manifests[Split.TRAIN], manifests[Split.TEST]


def category_label(manifest: DatasetManifest, category: Optional[str]) -> Optional[int]:
    """Label of a named category, or None when no category filter is requested."""
    if category is None:
        return None
    try:
        return manifest.label_of(category)
    except ValueError as e:
        raise InvalidInputError(str(e))
