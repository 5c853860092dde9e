"""
First-order optimizers over named Parameters.

Gradients are passed as a ``{name: array}`` mapping so gradients summed across
worker tapes can be applied in one step.
"""

from dataclasses import dataclass, field
from typing import Dict, Mapping, Sequence

import numpy as np

from ..config import OptimizerName
from ..errors import InvalidInputError, NonFiniteError, ShapeMismatchError
from .tensor import Parameter

Grads = Mapping[str, np.ndarray]


def _checked_grad(p: Parameter, grads: Grads) -> np.ndarray:
    g = grads.get(p.name)
    if g is None:
        return np.zeros_like(p.value)
    g = np.asarray(g, dtype=np.float64)
    if g.shape != p.value.shape:
        raise ShapeMismatchError(f"gradient of {p.name}", p.value.shape, g.shape)
    if not np.all(np.isfinite(g)):
        raise NonFiniteError(f"non-finite gradient for parameter {p.name!r}")
    return g


def sgd_step(params: Sequence[Parameter], grads: Grads, lr: float) -> None:
    """In-place p ← p − lr·g."""
    for p in params:
        g = _checked_grad(p, grads)
        p.value = p.value - lr * g


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Sequence[Parameter], grads: Grads, lr: float, state: AdamState) -> None:
    """One bias-corrected Adam update; moments live in ``state``."""
    checked = [(p, _checked_grad(p, grads)) for p in params]
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for p, g in checked:
        m = state.m.get(p.name, np.zeros_like(p.value))
        v = state.v.get(p.name, np.zeros_like(p.value))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[p.name] = m
        state.v[p.name] = v
        p.value = p.value - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


class Optimizer:
    def __init__(self, params: Sequence[Parameter], lr: float):
        if lr <= 0:
            raise InvalidInputError(f"learning rate must be positive, got {lr}")
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise InvalidInputError("optimizer parameters must have unique names")
        self.params = list(params)
        self.lr = lr

    def step(self, grads: Grads) -> None:
        raise NotImplementedError

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


class SGD(Optimizer):
    def step(self, grads: Grads) -> None:
        sgd_step(self.params, grads, self.lr)


class Adam(Optimizer):
    def __init__(self, params: Sequence[Parameter], lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(params, lr)
        self.state = AdamState(beta1=beta1, beta2=beta2, eps=eps)

    def step(self, grads: Grads) -> None:
        adam_step(self.params, grads, self.lr, self.state)


def make_optimizer(name: OptimizerName, params: Sequence[Parameter], lr: float) -> Optimizer:
    name = OptimizerName(name)
    if name is OptimizerName.SGD:
        return SGD(params, lr)
    return Adam(params, lr)
