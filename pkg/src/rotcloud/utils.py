"""
File and concurrency helpers shared by every pipeline stage.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, TypeVar, Union

import numpy as np
import pandas as pd

from .errors import InvalidInputError

T = TypeVar("T")
R = TypeVar("R")

PathLike = Union[str, os.PathLike]


def save_json(data: Dict[str, Any], output_path: PathLike) -> Path:
    """Save a JSON document atomically.

    Args:
        data: The JSON-serialisable document
        output_path: Full path to the output file

    Returns:
        The path to the saved file
    """
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)

    # Write next to the target first so the replace stays on one filesystem
    temp_path = output_path.with_name(output_path.name + ".tmp")
    try:
        with open(temp_path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, sort_keys=True)
            f.write("\n")
            f.flush()
            os.fsync(f.fileno())
        os.replace(temp_path, output_path)
    except Exception:
        try:
            os.remove(temp_path)
        except OSError:
            pass
        raise

    return output_path


def load_json(file_path: PathLike) -> Dict[str, Any]:
    """Load a JSON document.

    Raises:
        FileNotFoundError: If the file doesn't exist
        InvalidInputError: If the file is empty or not valid JSON
    """
    file_path = Path(file_path)
    if not file_path.exists():
        raise FileNotFoundError(f"JSON file not found: {file_path}")
    if file_path.stat().st_size == 0:
        raise InvalidInputError(f"JSON file is empty: {file_path}")

    try:
        with open(file_path, "rb") as f:
            return json.loads(f.read().decode("utf-8"))
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"Invalid JSON in {file_path}: {e}")


def save_bytes(data: bytes, output_path: PathLike) -> Path:
    """Write a binary blob atomically."""
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    temp_path = output_path.with_name(output_path.name + ".tmp")
    try:
        with open(temp_path, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(temp_path, output_path)
    except Exception:
        try:
            os.remove(temp_path)
        except OSError:
            pass
        raise
    return output_path


def write_csv(frame: pd.DataFrame, output_path: PathLike) -> Path:
    """Write a frame as CSV with full float precision and no index column."""
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    temp_path = output_path.with_name(output_path.name + ".tmp")
    frame.to_csv(temp_path, index=False, float_format="%.17g", lineterminator="\n")
    os.replace(temp_path, output_path)
    return output_path


def make_rng(*keys: int) -> np.random.Generator:
    """Generator seeded from an integer key path, e.g. (seed, stream, epoch, index)."""
    return np.random.default_rng([int(k) for k in keys])


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """Map fn over items, returning results in input order for any thread count."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
