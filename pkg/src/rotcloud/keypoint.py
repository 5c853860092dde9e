"""
Keypoint regression fine-tuned from a pretext backbone, with chamfer
training loss, nearest-point snapping and PCK evaluation.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from .autodiff import Var, ops
from .config import KeypointConfig
from .downstream import SWEEP_STREAM, stratified_subset
from .encoder import EncoderModel, HeadKind, HeadSpec, build_model
from .errors import InvalidInputError, SchemaError
from .pcdata import Dataset, PointCloud, category_label
from .schemas import TrainingLog
from .training import fit, holdout_split
from .utils import PathLike, make_rng, parallel_map, write_csv

DEFAULT_THRESHOLDS = np.round(np.arange(21) * 0.01, 2)


def _point_set(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 3:
        raise InvalidInputError(f"{name} must be an M×3 point set, got shape {x.shape}")
    if x.shape[0] == 0:
        raise InvalidInputError(f"{name} is empty")
    return x


def _squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)


def chamfer(a, b) -> float:
    """Mean squared nearest-neighbour distance from a to b plus from b to a."""
    a = _point_set(a, "first point set")
    b = _point_set(b, "second point set")
    d = _squared_distances(a, b)
    return float(d.min(axis=1).mean() + d.min(axis=0).mean())


def chamfer_loss(pred: Var, target: np.ndarray) -> Var:
    """Differentiable chamfer between (B, M, 3) predictions and (B, T, 3) targets, averaged over B."""
    target = np.asarray(target, dtype=np.float64)
    b, m, _ = pred.shape
    diff = ops.sub(ops.reshape(pred, (b, m, 1, 3)), target[:, None, :, :])
    d = ops.sum(ops.square(diff), axis=-1)
    return ops.add(ops.mean(ops.reduce_min(d, axis=2)), ops.mean(ops.reduce_min(d, axis=1)))


def snap_to_cloud(predicted, pc: PointCloud) -> np.ndarray:
    """Replace each predicted point by its nearest cloud point (lowest index on ties)."""
    predicted = _point_set(predicted, "predicted keypoints")
    return pc.points[np.argmin(_squared_distances(predicted, pc.points), axis=1)]


@dataclass(frozen=True, eq=False)
class PCKCurve:
    thresholds: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        thresholds = np.asarray(self.thresholds, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if thresholds.shape != values.shape or thresholds.ndim != 1:
            raise InvalidInputError("PCK thresholds and values must be equal-length vectors")
        if np.any(np.diff(thresholds) <= 0):
            raise InvalidInputError("PCK thresholds must be strictly ascending")
        if np.any(values < 0.0) or np.any(values > 1.0) or np.any(np.diff(values) < 0):
            raise InvalidInputError("PCK values must be non-decreasing fractions")
        object.__setattr__(self, "thresholds", thresholds)
        object.__setattr__(self, "values", values)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"threshold": self.thresholds, "value": self.values})

    def save_csv(self, path: PathLike) -> Path:
        return write_csv(self.to_frame(), path)

    @classmethod
    def load_csv(cls, path: PathLike) -> "PCKCurve":
        frame = pd.read_csv(path)
        for column in ("threshold", "value"):
            if column not in frame.columns:
                raise SchemaError(f"{path}: missing column {column!r}")
        return cls(frame["threshold"].to_numpy(), frame["value"].to_numpy())


def pck(
    predictions: Sequence[np.ndarray],
    ground_truth: Sequence[np.ndarray],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> PCKCurve:
    """Fraction of index-matched keypoints within each distance threshold."""
    if len(predictions) != len(ground_truth):
        raise InvalidInputError(f"{len(predictions)} predicted shapes but {len(ground_truth)} ground-truth shapes")
    if not predictions:
        raise InvalidInputError("no shapes to score")
    errors = []
    for shape_id, (pred, truth) in enumerate(zip(predictions, ground_truth)):
        pred, truth = np.asarray(pred, dtype=np.float64), np.asarray(truth, dtype=np.float64)
        if pred.shape != truth.shape:
            raise InvalidInputError(
                f"shape {shape_id}: {len(pred)} predicted keypoints but {len(truth)} ground-truth keypoints"
            )
        errors.append(np.linalg.norm(pred - truth, axis=-1))
    errors = np.concatenate(errors)
    thresholds = np.asarray(thresholds, dtype=np.float64)
    values = (errors[None, :] <= thresholds[:, None]).mean(axis=1)
    return PCKCurve(thresholds, values)


def predict_keypoints(model: EncoderModel, pc: PointCloud, snap: bool = False) -> np.ndarray:
    if model.head.kind is not HeadKind.KEYPOINTS:
        raise InvalidInputError(f"model head {model.head.kind.value!r} does not regress keypoints")
    keypoints = model.forward(pc)[1].reshape(model.head.size, 3)
    return snap_to_cloud(keypoints, pc) if snap else keypoints


def _keypoint_clouds(dataset: Dataset, category: Optional[str]) -> Dataset:
    label = category_label(dataset.manifest, category)
    if label is not None:
        dataset = dataset.of_label(label)
    if len(dataset) == 0:
        raise InvalidInputError(f"no clouds of category {category!r} in the dataset")
    missing = [e.path for e, pc in zip(dataset.manifest.entries, dataset.clouds) if pc.keypoints is None]
    if missing:
        raise InvalidInputError(f"clouds without keypoints: {missing[0]}" + (f" and {len(missing) - 1} more" if len(missing) > 1 else ""))
    counts = {pc.keypoints.shape[0] for pc in dataset.clouds}
    if len(counts) != 1:
        raise InvalidInputError(f"clouds carry differing keypoint counts {sorted(counts)}")
    return dataset


def _mean_chamfer(model: EncoderModel, clouds: Sequence[PointCloud], threads: int) -> float:
    return float(np.mean(parallel_map(lambda pc: chamfer(predict_keypoints(model, pc), pc.keypoints), clouds, threads)))


def finetune_keypoints(
    pretrained: Optional[EncoderModel], dataset: Dataset, config: KeypointConfig
) -> Tuple[EncoderModel, TrainingLog]:
    """Fine-tune a keypoint head on top of a pretrained backbone.

    Passing ``pretrained=None`` trains the same architecture from a random
    initialization. The output bias starts at the mean training keypoints.
    """
    dataset = _keypoint_clouds(dataset, config.category)
    m = dataset.clouds[0].keypoints.shape[0]
    model = build_model(
        HeadSpec.keypoints(m),
        config.widths,
        config.head_hidden,
        seed=config.seed,
        task="keypoints",
        category=config.category,
        pretrained=pretrained is not None,
    )
    if pretrained is not None:
        model.load_backbone(pretrained.state_dict())

    train_idx, hold_idx = holdout_split(len(dataset), config.holdout_fraction, config.seed)
    template = np.mean([dataset.clouds[i].keypoints for i in train_idx], axis=0)
    model.params["head.1.bias"].value = template.reshape(-1).copy()
    eval_clouds = [dataset.clouds[i] for i in (hold_idx or train_idx)]

    def sample(index: int, rng: np.random.Generator):
        pc = dataset.clouds[index]
        return pc.points, pc.keypoints

    def loss(out: Var, target: np.ndarray) -> Var:
        return chamfer_loss(ops.reshape(out, (1, m, 3)), target[None])

    log = fit(
        model,
        train_idx,
        sample,
        loss,
        lambda mdl: _mean_chamfer(mdl, eval_clouds, config.threads),
        config,
        metric_name="chamfer",
    )
    return model, log


def evaluate_pck(
    model: EncoderModel,
    dataset: Dataset,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    snap: bool = False,
    category: Optional[str] = None,
    threads: int = 1,
) -> PCKCurve:
    dataset = _keypoint_clouds(dataset, category)
    predictions = parallel_map(lambda pc: predict_keypoints(model, pc, snap), dataset.clouds, threads)
    return pck(predictions, [pc.keypoints for pc in dataset.clouds], thresholds)


def keypoint_label_sweep(
    pretrained: Optional[EncoderModel],
    train: Dataset,
    test: Dataset,
    fractions: Sequence[float],
    config: KeypointConfig,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    snap: bool = False,
) -> Dict[float, PCKCurve]:
    """One fine-tune per training fraction, each scored by PCK on the test split."""
    train = _keypoint_clouds(train, config.category)
    curves: Dict[float, PCKCurve] = {}
    for fraction in fractions:
        fraction = float(fraction)
        rng = make_rng(config.seed, SWEEP_STREAM, int(round(fraction * 1_000_000)))
        subset = train.subset(stratified_subset(train.labels, fraction, rng, train.manifest.categories))
        model, _ = finetune_keypoints(pretrained, subset, config)
        curves[fraction] = evaluate_pck(model, test, thresholds, snap, config.category, config.threads)
        logger.info(f"fraction {fraction:g}: {len(subset)} shapes, PCK@0.1 = {np.interp(0.1, curves[fraction].thresholds, curves[fraction].values):.4f}")
    return curves


def sweep_frame(curves: Dict[float, PCKCurve]) -> pd.DataFrame:
    frames: List[pd.DataFrame] = []
    for fraction, curve in curves.items():
        frame = curve.to_frame()
        frame.insert(0, "fraction", fraction)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=["fraction", "threshold", "value"])
