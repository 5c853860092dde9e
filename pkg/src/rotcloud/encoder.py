"""
Point-cloud encoder: shared per-point MLP, global max-pool, task head.

Parameters are named ``backbone.<i>.{weight,scale,shift}`` and
``head.<j>.{weight,bias}`` so backbones can be moved between models with
different heads.
"""

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .autodiff import Parameter, Var, load_weights, ops, save_weights
from .errors import InvalidInputError, WeightsFormatError, WeightsMismatchError
from .pcdata.cloud import PointCloud
from .utils import PathLike, parallel_map

NORM_TOL = 1e-6
HEAD_OUTPUT_SCALE = 1e-3


class HeadKind(str, Enum):
    CLASSIFY = "classify"
    AXIS_ANGLE = "axisangle"
    SIXD = "sixd"
    KEYPOINTS = "keypoints"


@dataclass(frozen=True)
class HeadSpec:
    kind: HeadKind
    size: int = 0  # K for classify, M for keypoints

    def __post_init__(self):
        object.__setattr__(self, "kind", HeadKind(self.kind))
        if self.kind in (HeadKind.CLASSIFY, HeadKind.KEYPOINTS) and self.size < 1:
            raise InvalidInputError(f"{self.kind.value} head needs a positive size, got {self.size}")

    @property
    def out_dim(self) -> int:
        if self.kind is HeadKind.CLASSIFY:
            return self.size
        if self.kind is HeadKind.AXIS_ANGLE:
            return 4
        if self.kind is HeadKind.SIXD:
            return 6
        return 3 * self.size

    @classmethod
    def classify(cls, k: int) -> "HeadSpec":
        return cls(HeadKind.CLASSIFY, k)

    @classmethod
    def keypoints(cls, m: int) -> "HeadSpec":
        return cls(HeadKind.KEYPOINTS, m)


class EncoderModel:
    def __init__(
        self,
        head: HeadSpec,
        widths: Sequence[int] = (64, 128, 256),
        head_hidden: int = 128,
        rng: Optional[np.random.Generator] = None,
        metadata: Optional[Mapping[str, Any]] = None,
    ):
        if not widths or any(w <= 0 for w in widths) or head_hidden <= 0:
            raise InvalidInputError(f"layer widths must be positive, got {list(widths)} and {head_hidden}")
        self.head = head
        self.widths = [int(w) for w in widths]
        self.head_hidden = int(head_hidden)
        self.metadata: Dict[str, Any] = dict(metadata or {})
        rng = rng if rng is not None else np.random.default_rng(0)

        self.params: Dict[str, Parameter] = {}
        fan_in = 3
        for i, width in enumerate(self.widths):
            self._add(f"backbone.{i}.weight", rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_in, width)))
            self._add(f"backbone.{i}.scale", np.ones(width))
            self._add(f"backbone.{i}.shift", np.zeros(width))
            fan_in = width
        self._init_head(rng)

    def _add(self, name: str, value: np.ndarray) -> None:
        self.params[name] = Parameter(value, name=name)

    def _init_head(self, rng: np.random.Generator) -> None:
        for name in [n for n in self.params if n.startswith("head.")]:
            del self.params[name]
        self._add("head.0.weight", rng.normal(0.0, np.sqrt(2.0 / self.global_dim), (self.global_dim, self.head_hidden)))
        self._add("head.0.bias", np.zeros(self.head_hidden))
        # small output weights keep initial logits near zero, so the first loss is close to ln K
        self._add("head.1.weight", rng.normal(0.0, HEAD_OUTPUT_SCALE / np.sqrt(self.head_hidden), (self.head_hidden, self.head.out_dim)))
        self._add("head.1.bias", np.zeros(self.head.out_dim))

    def replace_head(self, head: HeadSpec, rng: np.random.Generator) -> None:
        self.head = head
        self._init_head(rng)

    @property
    def global_dim(self) -> int:
        return self.widths[-1]

    def parameters(self) -> List[Parameter]:
        return list(self.params.values())

    def backbone_names(self) -> List[str]:
        return [n for n in self.params if n.startswith("backbone.")]

    def forward_batch(self, points: Union[np.ndarray, Var]) -> Tuple[Var, Var]:
        """(B, N, 3) normalized clouds → ((B, D) global features, (B, out) head output)."""
        x = ops.as_var(points)
        if x.ndim != 3 or x.shape[-1] != 3:
            raise InvalidInputError(f"encoder input must be (B, N, 3), got shape {x.shape}")
        max_norm = float(np.linalg.norm(x.value, axis=-1).max())
        if max_norm > 1.0 + NORM_TOL:
            raise InvalidInputError(f"encoder input is not normalized (max point norm {max_norm:.6g})")

        h = x
        for i in range(len(self.widths)):
            p = f"backbone.{i}"
            h = ops.relu(ops.scale_shift(ops.matmul(h, self.params[f"{p}.weight"]), self.params[f"{p}.scale"], self.params[f"{p}.shift"]))
        feature = ops.max_over_points(h)

        z = ops.relu(ops.add(ops.matmul(feature, self.params["head.0.weight"]), self.params["head.0.bias"]))
        out = ops.add(ops.matmul(z, self.params["head.1.weight"]), self.params["head.1.bias"])
        return feature, out

    def forward(self, pc: PointCloud) -> Tuple[np.ndarray, np.ndarray]:
        feature, out = self.forward_batch(pc.points[None])
        return feature.value[0], out.value[0]

    def extract_feature(self, pc: PointCloud) -> np.ndarray:
        return self.forward(pc)[0]

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self.params.items()}

    def load_state_dict(self, tensors: Mapping[str, np.ndarray]) -> None:
        missing = sorted(set(self.params) - set(tensors))
        unexpected = sorted(set(tensors) - set(self.params))
        if missing or unexpected:
            raise WeightsMismatchError("weights do not match the model layout", missing + unexpected)
        wrong = [n for n, p in self.params.items() if np.shape(tensors[n]) != p.value.shape]
        if wrong:
            raise WeightsMismatchError("tensor shapes differ from the model", wrong)
        for name, p in self.params.items():
            p.value = np.array(tensors[name], dtype=np.float64)

    def load_backbone(self, tensors: Mapping[str, np.ndarray]) -> None:
        """Copy backbone tensors bit for bit, leaving the head untouched."""
        names = self.backbone_names()
        missing = [n for n in names if n not in tensors]
        if missing:
            raise WeightsMismatchError("source has no matching backbone tensors", missing)
        wrong = [n for n in names if np.shape(tensors[n]) != self.params[n].value.shape]
        extra = sorted(n for n in tensors if n.startswith("backbone.") and n not in self.params)
        if wrong or extra:
            raise WeightsMismatchError("backbone shapes differ", wrong + extra)
        for n in names:
            self.params[n].value = np.array(tensors[n], dtype=np.float64)

    def config_metadata(self) -> Dict[str, Any]:
        return {
            "head": self.head.kind.value,
            "head_size": self.head.size,
            "widths": self.widths,
            "head_hidden": self.head_hidden,
        }

    def save(self, path: PathLike) -> Path:
        metadata = {**self.metadata, **self.config_metadata()}
        return save_weights(path, self.state_dict(), metadata)

    @classmethod
    def load(cls, path: PathLike) -> "EncoderModel":
        tensors, metadata = load_weights(path)
        try:
            head = HeadSpec(HeadKind(metadata["head"]), int(metadata.get("head_size", 0)))
            widths = [int(w) for w in metadata["widths"]]
            head_hidden = int(metadata["head_hidden"])
        except (KeyError, ValueError, TypeError) as e:
            raise WeightsFormatError(f"{path}: model metadata incomplete ({e})")
        extra = {k: v for k, v in metadata.items() if k not in ("head", "head_size", "widths", "head_hidden")}
        model = cls(head, widths=widths, head_hidden=head_hidden, metadata=extra)
        model.load_state_dict(tensors)
        return model


def build_model(head: HeadSpec, widths: Sequence[int], head_hidden: int, seed: int, **metadata: Any) -> EncoderModel:
    return EncoderModel(head, widths=widths, head_hidden=head_hidden, rng=np.random.default_rng(seed), metadata=metadata)


def batch_features(model: EncoderModel, clouds: Sequence[PointCloud], threads: int = 1) -> np.ndarray:
    """Global features of each cloud, one row per cloud in input order."""
    rows = parallel_map(model.extract_feature, clouds, threads)
    return np.stack(rows) if rows else np.zeros((0, model.global_dim))
