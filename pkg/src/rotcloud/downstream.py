"""
Transfer evaluation on frozen encoder features.

Features are the max-pooled global activations. A one-vs-rest linear SVM is
fit by full-batch gradient descent on the squared-hinge objective.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger

from .config import SVMConfig
from .encoder import EncoderModel, batch_features
from .errors import FeatureMismatchError, InsufficientSamplesError, InvalidInputError, SchemaError
from .pcdata import Dataset
from .utils import PathLike, make_rng, write_csv

SWEEP_STREAM = 4


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    rows: np.ndarray
    labels: np.ndarray
    source: str = ""

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)
        if rows.ndim != 2:
            raise InvalidInputError(f"feature rows must be N×D, got shape {rows.shape}")
        if rows.shape[0] != labels.shape[0]:
            raise FeatureMismatchError(f"{rows.shape[0]} feature rows but {labels.shape[0]} labels")
        if not np.all(np.isfinite(rows)):
            raise InvalidInputError(f"feature matrix {self.source!r} has non-finite entries")
        if labels.size and labels.min() < 0:
            raise InvalidInputError("feature labels must be non-negative")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def subset(self, indices: Sequence[int]) -> "FeatureMatrix":
        indices = np.asarray(indices, dtype=np.int64)
        return FeatureMatrix(self.rows[indices], self.labels[indices], self.source)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.rows, columns=[f"f{j}" for j in range(self.dim)])
        frame.insert(0, "label", self.labels)
        return frame

    def save_csv(self, path: PathLike) -> Path:
        return write_csv(self.to_frame(), path)

    @classmethod
    def load_csv(cls, path: PathLike) -> "FeatureMatrix":
        frame = pd.read_csv(path)
        if "label" not in frame.columns:
            raise SchemaError(f"{path}: missing column 'label'")
        features = frame.drop(columns=["label"])
        return cls(features.to_numpy(dtype=np.float64), frame["label"].to_numpy(dtype=np.int64), Path(path).stem)


def extract_dataset_features(model: EncoderModel, dataset: Dataset, threads: int = 1, source: str = "") -> FeatureMatrix:
    """One global-feature row per manifest entry, in manifest order."""
    rows = batch_features(model, dataset.clouds, threads)
    return FeatureMatrix(rows, dataset.labels, source or str(model.metadata.get("task", "model")))


def concat_features(fm1: FeatureMatrix, fm2: FeatureMatrix) -> FeatureMatrix:
    if len(fm1) != len(fm2):
        raise FeatureMismatchError(f"cannot concatenate {len(fm1)} rows with {len(fm2)} rows")
    disagree = np.flatnonzero(fm1.labels != fm2.labels)
    if disagree.size:
        row = int(disagree[0])
        raise FeatureMismatchError(f"label mismatch at row {row}: {fm1.labels[row]} vs {fm2.labels[row]}")
    source = "+".join(s for s in (fm1.source, fm2.source) if s)
    return FeatureMatrix(np.hstack([fm1.rows, fm2.rows]), fm1.labels, source)


@dataclass
class LinearSVM:
    """Prediction is argmax over classes of w_c·x + b_c, ties to the lowest class."""

    weights: np.ndarray
    bias: np.ndarray
    lam: float
    objective: List[float] = field(default_factory=list)

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.weights.shape[1]:
            raise FeatureMismatchError(f"model expects {self.weights.shape[1]} features, got {x.shape[-1]}")
        return x @ self.weights.T + self.bias

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.decision_function(x), axis=-1)

    def accuracy(self, fm: FeatureMatrix) -> float:
        if len(fm) == 0:
            raise InvalidInputError("cannot score an empty feature matrix")
        return float(np.mean(self.predict(fm.rows) == fm.labels))


def _svm_objective(z: np.ndarray, y: np.ndarray, w: np.ndarray, b: np.ndarray, lam: float) -> float:
    margins = np.maximum(0.0, 1.0 - y * (z @ w.T + b))
    return float((margins ** 2).sum() / z.shape[0] + lam * (w ** 2).sum())


def train_svm(fm: FeatureMatrix, lam: float = 1e-3, iters: int = 2000) -> LinearSVM:
    """Fit one-vs-rest squared hinge + λ‖W‖² by gradient descent with backtracking.

    Features are standardized for the fit and the scaling is folded back into
    the returned weights. The objective never increases between iterations.
    """
    classes = np.unique(fm.labels)
    if classes.size < 2:
        raise InvalidInputError(f"SVM training needs at least 2 classes, got {classes.tolist()}")
    if lam <= 0 or iters < 1:
        raise InvalidInputError("SVM needs λ > 0 and at least one iteration")

    n_classes = int(fm.labels.max()) + 1
    mu = fm.rows.mean(axis=0)
    sigma = fm.rows.std(axis=0)
    sigma = np.where(sigma > 1e-12, sigma, 1.0)
    z = (fm.rows - mu) / sigma
    n = z.shape[0]
    y = np.where(fm.labels[:, None] == np.arange(n_classes)[None, :], 1.0, -1.0)

    w = np.zeros((n_classes, z.shape[1]))
    # with w = 0 the squared-hinge optimum for class c is b = 2·p_c − 1
    b = 2.0 * (y > 0).mean(axis=0) - 1.0
    objective = [_svm_objective(z, y, w, b, lam)]
    step = 1.0
    for _ in range(iters):
        margins = np.maximum(0.0, 1.0 - y * (z @ w.T + b))
        d_scores = -2.0 * y * margins / n
        grad_w = d_scores.T @ z + 2.0 * lam * w
        grad_b = d_scores.sum(axis=0)
        if not np.any(grad_w) and not np.any(grad_b):
            break

        while step > 1e-14:
            w_new = w - step * grad_w
            b_new = b - step * grad_b
            value = _svm_objective(z, y, w_new, b_new, lam)
            if value <= objective[-1]:
                break
            step /= 2.0
        else:
            break
        w, b = w_new, b_new
        objective.append(value)
        step = min(2.0 * step, 1e6)

    weights = w / sigma
    bias = b - weights @ mu
    logger.debug(f"SVM fit: {len(objective) - 1} steps, objective {objective[0]:.6f} → {objective[-1]:.6f}")
    return LinearSVM(weights=weights, bias=bias, lam=lam, objective=objective)


def stratified_subset(
    labels: np.ndarray, fraction: float, rng: np.random.Generator, class_names: Optional[Sequence[str]] = None
) -> np.ndarray:
    """Sorted row indices keeping round(fraction·n_c) rows of every class c."""
    if not 0.0 < fraction <= 1.0:
        raise InvalidInputError(f"fractions must lie in (0, 1], got {fraction}")
    labels = np.asarray(labels)
    if fraction == 1.0:
        return np.arange(labels.size)
    chosen = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        keep = int(np.floor(fraction * members.size + 0.5))
        if keep == 0:
            name = class_names[c] if class_names is not None and c < len(class_names) else str(c)
            raise InsufficientSamplesError(
                f"fraction {fraction} leaves class {name} with no samples ({members.size} available)"
            )
        chosen.append(rng.choice(members, size=keep, replace=False))
    return np.sort(np.concatenate(chosen))


def label_efficiency_sweep(
    train: FeatureMatrix,
    test: FeatureMatrix,
    fractions: Sequence[float],
    seed: int = 0,
    svm: Optional[SVMConfig] = None,
    class_names: Optional[Sequence[str]] = None,
) -> pd.DataFrame:
    """Test accuracy of SVMs fit on stratified fractions of the training features."""
    svm = svm or SVMConfig()
    records = []
    for fraction in fractions:
        fraction = float(fraction)
        rng = make_rng(seed, SWEEP_STREAM, int(round(fraction * 1_000_000)))
        subset = train.subset(stratified_subset(train.labels, fraction, rng, class_names))
        model = train_svm(subset, lam=svm.lam, iters=svm.iters)
        accuracy = model.accuracy(test)
        logger.info(f"fraction {fraction:g}: {len(subset)} training rows, accuracy {accuracy:.4f}")
        records.append({"fraction": fraction, "accuracy": accuracy})
    return pd.DataFrame(records, columns=["fraction", "accuracy"])


def model_label_efficiency_sweep(
    model: EncoderModel,
    train: Dataset,
    test: Dataset,
    fractions: Sequence[float],
    seed: int = 0,
    svm: Optional[SVMConfig] = None,
    threads: int = 1,
) -> pd.DataFrame:
    train_fm = extract_dataset_features(model, train, threads)
    test_fm = extract_dataset_features(model, test, threads)
    return label_efficiency_sweep(train_fm, test_fm, fractions, seed, svm, train.manifest.categories)
