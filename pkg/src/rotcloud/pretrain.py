"""
Rotation-prediction pretext training.

Three variants share one encoder: K-way classification of the direction the
up-vector was rotated to, axis-angle regression, and 6D regression.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from .autodiff import Var, ops
from .config import PretextTask, TrainConfig
from .dirset import DirectionSet, build_direction_set, nearest_direction, parse_up_axis, rotations_for
from .encoder import EncoderModel, HeadKind, HeadSpec, build_model
from .errors import DegenerateRotationError, InvalidInputError
from .pcdata import Dataset, PointCloud, normalize
from .schemas import TrainingLog
from .so3 import (
    AxisAngle,
    Rotation,
    SixD,
    apply_rotation,
    axis_angle_to_rotation,
    geodesic_distance,
    sample_axis_angle,
    sixd_to_rotation,
)
from .training import EVAL_STREAM, fit, holdout_split
from .utils import make_rng, parallel_map


@dataclass(frozen=True, eq=False)
class PretextSample:
    """A rotated cloud with the rotation applied and the label derived from it."""

    cloud: PointCloud
    rotation: Rotation
    label: Union[int, AxisAngle, SixD]


def make_classification_sample(
    pc: PointCloud,
    ds: DirectionSet,
    rng: np.random.Generator,
    up=(0.0, 1.0, 0.0),
    rotations: Optional[Sequence[Rotation]] = None,
) -> Tuple[PointCloud, int]:
    """Rotate ``pc`` by a uniformly drawn R_i from the direction set; returns (cloud, i)."""
    rotations = rotations if rotations is not None else rotations_for(ds, up)
    label = int(rng.integers(ds.k))
    return apply_rotation(rotations[label], pc), label


def classification_sample(pc, ds, rng, up=(0.0, 1.0, 0.0), rotations=None) -> PretextSample:
    rotations = rotations if rotations is not None else rotations_for(ds, up)
    cloud, label = make_classification_sample(pc, ds, rng, up=up, rotations=rotations)
    return PretextSample(cloud=cloud, rotation=rotations[label], label=label)


def make_axis_angle_sample(pc: PointCloud, rng: np.random.Generator) -> PretextSample:
    aa = sample_axis_angle(rng)
    rotation = axis_angle_to_rotation(aa)
    return PretextSample(cloud=apply_rotation(rotation, pc), rotation=rotation, label=aa)


def make_sixd_sample(pc: PointCloud, rng: np.random.Generator) -> PretextSample:
    rotation = axis_angle_to_rotation(sample_axis_angle(rng))
    return PretextSample(cloud=apply_rotation(rotation, pc), rotation=rotation, label=SixD.from_rotation(rotation))


def label_from_rotation(ds: DirectionSet, rotation: Rotation, up=(0.0, 1.0, 0.0)) -> int:
    return nearest_direction(ds, rotation.apply(np.asarray(up, dtype=np.float64)))


def classification_loss(out: Var, label: int) -> Var:
    return ops.softmax_cross_entropy(out, [label])


def axis_angle_loss(out: Var, target: AxisAngle) -> Var:
    """Equal-weight squared error on the axis (3 outputs) and the angle (1 output)."""
    axis_err = ops.mse(ops.getitem(out, (slice(None), slice(0, 3))), target.axis[None])
    angle_err = ops.mse(ops.getitem(out, (slice(None), slice(3, 4))), np.array([[target.angle]]))
    return ops.add(axis_err, angle_err)


def gram_schmidt(out: Var) -> Var:
    """Differentiable (B, 6) → (B, 3, 3) rotation matrices with columns c1, c2, c1×c2."""
    a1 = ops.getitem(out, (slice(None), slice(0, 3)))
    a2 = ops.getitem(out, (slice(None), slice(3, 6)))
    c1 = ops.div(a1, ops.sqrt(ops.sum(ops.square(a1), axis=-1, keepdims=True)))
    u2 = ops.sub(a2, ops.mul(ops.sum(ops.mul(a2, c1), axis=-1, keepdims=True), c1))
    c2 = ops.div(u2, ops.sqrt(ops.sum(ops.square(u2), axis=-1, keepdims=True)))
    c3 = ops.cross(c1, c2)
    return ops.stack([c1, c2, c3], axis=-1)


def _is_degenerate(row: np.ndarray) -> bool:
    try:
        sixd_to_rotation(SixD(row[:3], row[3:]))
    except DegenerateRotationError:
        return True
    return False


def sixd_loss(out: Var, target: Rotation) -> Optional[Var]:
    """Mean squared error between the mapped rotation and the target matrix; None if degenerate."""
    if any(_is_degenerate(row) for row in out.value):
        return None
    return ops.mse(gram_schmidt(out), target.m[None])


def predict_direction(model: EncoderModel, pc: PointCloud) -> int:
    return int(np.argmax(model.forward(pc)[1]))


def predicted_rotation(model: EncoderModel, pc: PointCloud) -> Optional[Rotation]:
    """Rotation read off a regression head; None for a degenerate 6D output."""
    out = model.forward(pc)[1]
    if model.head.kind is HeadKind.AXIS_ANGLE:
        norm = np.linalg.norm(out[:3])
        axis = out[:3] / norm if norm > 1e-12 else np.array([0.0, 0.0, 1.0])
        # raw angle output is only clamped here, never during training
        return axis_angle_to_rotation(AxisAngle(axis, float(np.clip(out[3], 0.0, np.pi))))
    if model.head.kind is HeadKind.SIXD:
        try:
            return sixd_to_rotation(SixD(out[:3], out[3:]))
        except DegenerateRotationError:
            return None
    raise InvalidInputError(f"model head {model.head.kind.value!r} does not regress rotations")


def evaluate_rotation_accuracy(
    model: EncoderModel,
    clouds: Sequence[PointCloud],
    ds: DirectionSet,
    up=(0.0, 1.0, 0.0),
    seed: Optional[int] = None,
    threads: int = 1,
) -> float:
    """Fraction of rotated clouds whose direction class is predicted correctly.

    With ``seed`` each cloud is rotated once by a label drawn from
    ``make_rng(seed, EVAL_STREAM, i)``; without it every cloud is scored under
    all K rotations.
    """
    if not clouds:
        raise InvalidInputError("no clouds to evaluate")
    rotations = rotations_for(ds, up)

    def score(i: int) -> Tuple[int, int]:
        pc = clouds[i]
        if seed is None:
            hits = sum(predict_direction(model, apply_rotation(r, pc)) == label for label, r in enumerate(rotations))
            return hits, len(rotations)
        rotated, label = make_classification_sample(pc, ds, make_rng(seed, EVAL_STREAM, i), rotations=rotations)
        return int(predict_direction(model, rotated) == label), 1

    results = parallel_map(score, range(len(clouds)), threads)
    return sum(h for h, _ in results) / sum(n for _, n in results)


def evaluate_geodesic_error(model: EncoderModel, clouds: Sequence[PointCloud], seed: int, threads: int = 1) -> float:
    """Mean angle between predicted and applied rotations; degenerate predictions count as π."""
    if not clouds:
        raise InvalidInputError("no clouds to evaluate")

    def error(i: int) -> float:
        sample = make_axis_angle_sample(clouds[i], make_rng(seed, EVAL_STREAM, i))
        predicted = predicted_rotation(model, sample.cloud)
        return np.pi if predicted is None else geodesic_distance(predicted, sample.rotation)

    return float(np.mean(parallel_map(error, range(len(clouds)), threads)))


def _augment(pc: PointCloud, jitter: float, rng: np.random.Generator) -> PointCloud:
    if jitter <= 0.0:
        return pc
    return normalize(pc.with_points(pc.points + rng.normal(0.0, jitter, size=pc.points.shape)))


def _split(dataset: Dataset, config: TrainConfig) -> Tuple[List[int], List[PointCloud]]:
    if len(dataset) == 0:
        raise InvalidInputError("training dataset is empty")
    train_idx, hold_idx = holdout_split(len(dataset), config.holdout_fraction, config.seed)
    # with no held-out clouds the metric falls back to the training clouds
    eval_idx = hold_idx or train_idx
    logger.info(f"Pretext split: {len(train_idx)} train, {len(hold_idx)} held out")
    return train_idx, [dataset.clouds[i] for i in eval_idx]


def _model_for(config: TrainConfig, head: HeadSpec, **metadata) -> EncoderModel:
    return build_model(
        head,
        config.widths,
        config.head_hidden,
        seed=config.seed,
        task=config.task.value,
        up_axis=config.up_axis,
        **metadata,
    )


def train_classifier(dataset: Dataset, config: TrainConfig) -> Tuple[EncoderModel, TrainingLog]:
    ds = build_direction_set(config.k)
    up = parse_up_axis(config.up_axis)
    rotations = rotations_for(ds, up)
    train_idx, eval_clouds = _split(dataset, config)
    model = _model_for(config, HeadSpec.classify(ds.k), k=ds.k, scheme=ds.scheme.value)

    def sample(index: int, rng: np.random.Generator):
        pc = _augment(dataset.clouds[index], config.jitter, rng)
        rotated, label = make_classification_sample(pc, ds, rng, rotations=rotations)
        return rotated.points, label

    log = fit(
        model,
        train_idx,
        sample,
        classification_loss,
        lambda m: evaluate_rotation_accuracy(m, eval_clouds, ds, up, seed=config.seed, threads=config.threads),
        config,
        metric_name="rotation_accuracy",
    )
    return model, log


def train_regressor_axis_angle(dataset: Dataset, config: TrainConfig) -> Tuple[EncoderModel, TrainingLog]:
    train_idx, eval_clouds = _split(dataset, config)
    model = _model_for(config, HeadSpec(HeadKind.AXIS_ANGLE))

    def sample(index: int, rng: np.random.Generator):
        s = make_axis_angle_sample(_augment(dataset.clouds[index], config.jitter, rng), rng)
        return s.cloud.points, s.label

    log = fit(
        model,
        train_idx,
        sample,
        axis_angle_loss,
        lambda m: evaluate_geodesic_error(m, eval_clouds, config.seed, threads=config.threads),
        config,
        metric_name="geodesic_error",
    )
    return model, log


def train_regressor_sixd(dataset: Dataset, config: TrainConfig) -> Tuple[EncoderModel, TrainingLog]:
    train_idx, eval_clouds = _split(dataset, config)
    model = _model_for(config, HeadSpec(HeadKind.SIXD))

    def sample(index: int, rng: np.random.Generator):
        s = make_sixd_sample(_augment(dataset.clouds[index], config.jitter, rng), rng)
        return s.cloud.points, s.rotation

    log = fit(
        model,
        train_idx,
        sample,
        sixd_loss,
        lambda m: evaluate_geodesic_error(m, eval_clouds, config.seed, threads=config.threads),
        config,
        metric_name="geodesic_error",
    )
    return model, log


def train_pretext(dataset: Dataset, config: TrainConfig) -> Tuple[EncoderModel, TrainingLog]:
    if config.task is PretextTask.CLASSIFY:
        return train_classifier(dataset, config)
    if config.task is PretextTask.AXIS_ANGLE:
        return train_regressor_axis_angle(dataset, config)
    return train_regressor_sixd(dataset, config)


def evaluate_pretext(
    model: EncoderModel,
    clouds: Sequence[PointCloud],
    seed: int,
    all_directions: bool = False,
    threads: int = 1,
) -> Tuple[str, float]:
    """Held-out pretext metric of a saved model: ("accuracy", …) or ("geodesic_error", …)."""
    if model.head.kind is HeadKind.CLASSIFY:
        ds = build_direction_set(model.head.size)
        up = parse_up_axis(model.metadata.get("up_axis", "y"))
        accuracy = evaluate_rotation_accuracy(
            model, clouds, ds, up, seed=None if all_directions else seed, threads=threads
        )
        return "accuracy", accuracy
    if model.head.kind in (HeadKind.AXIS_ANGLE, HeadKind.SIXD):
        return "geodesic_error", evaluate_geodesic_error(model, clouds, seed, threads=threads)
    raise InvalidInputError(f"model head {model.head.kind.value!r} is not a pretext head")
