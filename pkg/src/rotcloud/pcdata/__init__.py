from .cloud import PointCloud, normalize, read_xyz, write_xyz
from .dataset import (
    Dataset,
    category_label,
    generate_dataset,
    ingest,
    load_dataset,
    load_split,
    manifest_path,
)
from .mesh import Mesh, load_mesh, load_obj, load_off, sample_mesh
from .synthetic import CANONICAL, CATEGORIES, Category, ShapeVariation, generate_shape

__all__ = [
    "CANONICAL",
    "CATEGORIES",
    "Category",
    "Dataset",
    "Mesh",
    "PointCloud",
    "ShapeVariation",
    "category_label",
    "generate_dataset",
    "generate_shape",
    "ingest",
    "load_dataset",
    "load_mesh",
    "load_obj",
    "load_off",
    "load_split",
    "manifest_path",
    "normalize",
    "read_xyz",
    "sample_mesh",
    "write_xyz",
]
