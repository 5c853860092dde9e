"""
Differentiable operations.

Each op computes its value eagerly and, when a tape is recording, registers a
backward rule mapping the output gradient to one gradient per input.
"""

from typing import Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import InvalidInputError, ShapeMismatchError
from .tensor import BackwardFn, Var, active_tape

ArrayLike = Union[Var, np.ndarray, float, int]


def as_var(x: ArrayLike) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _result(value: np.ndarray, parents: Sequence[Var], backward_fn: BackwardFn) -> Var:
    out = Var(value)
    tape = active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        tape.record(out, parents, backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(op: str, a: Var, b: Var) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchError(op, a.shape, b.shape)


def add(a: ArrayLike, b: ArrayLike) -> Var:
    a, b = as_var(a), as_var(b)
    _broadcast_shape("add", a, b)
    return _result(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a: ArrayLike, b: ArrayLike) -> Var:
    a, b = as_var(a), as_var(b)
    _broadcast_shape("sub", a, b)
    return _result(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a: ArrayLike, b: ArrayLike) -> Var:
    a, b = as_var(a), as_var(b)
    _broadcast_shape("mul", a, b)
    return _result(
        a.value * b.value,
        (a, b),
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
    )


def div(a: ArrayLike, b: ArrayLike) -> Var:
    a, b = as_var(a), as_var(b)
    _broadcast_shape("div", a, b)
    value = a.value / b.value
    return _result(
        value,
        (a, b),
        lambda g: (_unbroadcast(g / b.value, a.shape), _unbroadcast(-g * value / b.value, b.shape)),
    )


def square(x: ArrayLike) -> Var:
    x = as_var(x)
    return _result(x.value ** 2, (x,), lambda g: (2.0 * x.value * g,))


def sqrt(x: ArrayLike) -> Var:
    x = as_var(x)
    value = np.sqrt(x.value)
    return _result(value, (x,), lambda g: (g / (2.0 * value),))


def matmul(a: ArrayLike, b: ArrayLike) -> Var:
    """Batched matrix product; a weight matrix b (2-D) is shared across the batch."""
    a, b = as_var(a), as_var(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError("matmul", a.shape, b.shape)

    def backward(g: np.ndarray):
        ga = _unbroadcast(g @ np.swapaxes(b.value, -1, -2), a.shape)
        if b.ndim == 2:
            gb = a.value.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = _unbroadcast(np.swapaxes(a.value, -1, -2) @ g, b.shape)
        return ga, gb

    return _result(a.value @ b.value, (a, b), backward)


def relu(x: ArrayLike) -> Var:
    x = as_var(x)
    mask = x.value > 0.0
    return _result(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def _reduce_extreme(x: Var, axis: int, pick) -> Var:
    axis = axis % x.ndim
    # argmax/argmin return the first occurrence, so ties route to the lowest index
    index = np.expand_dims(pick(x.value, axis=axis), axis)
    value = np.take_along_axis(x.value, index, axis=axis).squeeze(axis)

    def backward(g: np.ndarray):
        gx = np.zeros_like(x.value)
        np.put_along_axis(gx, index, np.expand_dims(g, axis), axis=axis)
        return (gx,)

    return _result(value, (x,), backward)


def reduce_max(x: ArrayLike, axis: int = -1) -> Var:
    return _reduce_extreme(as_var(x), axis, np.argmax)


def reduce_min(x: ArrayLike, axis: int = -1) -> Var:
    return _reduce_extreme(as_var(x), axis, np.argmin)


def max_over_points(x: ArrayLike) -> Var:
    """Channel-wise max over the point axis of (..., N, C) features."""
    x = as_var(x)
    if x.ndim < 2:
        raise InvalidInputError(f"max_over_points needs (..., N, C) features, got shape {x.shape}")
    return reduce_max(x, axis=-2)


def sum(x: ArrayLike, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> Var:
    x = as_var(x)
    value = np.sum(x.value, axis=axis, keepdims=keepdims)

    def backward(g: np.ndarray):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(value, (x,), backward)


def mean(x: ArrayLike, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> Var:
    x = as_var(x)
    count = x.value.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x: ArrayLike, shape: Tuple[int, ...]) -> Var:
    x = as_var(x)
    try:
        value = x.value.reshape(shape)
    except ValueError:
        raise ShapeMismatchError("reshape", x.shape, shape)
    return _result(value, (x,), lambda g: (g.reshape(x.shape),))


def getitem(x: ArrayLike, index) -> Var:
    x = as_var(x)
    parts = index if isinstance(index, tuple) else (index,)
    basic = all(p is Ellipsis or p is None or isinstance(p, (slice, int, np.integer)) for p in parts)

    def backward(g: np.ndarray):
        gx = np.zeros_like(x.value)
        if basic:
            gx[index] += g
        else:
            # fancy indices may repeat, so accumulate unbuffered
            np.add.at(gx, index, g)
        return (gx,)

    return _result(x.value[index], (x,), backward)


def concat(xs: Sequence[ArrayLike], axis: int = -1) -> Var:
    xs = [as_var(x) for x in xs]
    if not xs:
        raise InvalidInputError("concat needs at least one input")
    try:
        value = np.concatenate([x.value for x in xs], axis=axis)
    except ValueError:
        raise ShapeMismatchError("concat", xs[0].shape, next((x.shape for x in xs if x.shape != xs[0].shape), xs[0].shape))
    splits = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return _result(value, xs, lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(xs: Sequence[ArrayLike], axis: int = 0) -> Var:
    xs = [as_var(x) for x in xs]
    for x in xs[1:]:
        if x.shape != xs[0].shape:
            raise ShapeMismatchError("stack", xs[0].shape, x.shape)
    value = np.stack([x.value for x in xs], axis=axis)
    return _result(value, xs, lambda g: tuple(np.moveaxis(g, axis, 0)))


def cross(a: ArrayLike, b: ArrayLike) -> Var:
    """Cross product along the last axis."""
    a, b = as_var(a), as_var(b)
    if a.shape[-1:] != (3,) or b.shape[-1:] != (3,):
        raise ShapeMismatchError("cross", a.shape, b.shape, "last axis must have length 3")
    _broadcast_shape("cross", a, b)
    return _result(
        np.cross(a.value, b.value),
        (a, b),
        lambda g: (
            _unbroadcast(np.cross(b.value, g), a.shape),
            _unbroadcast(np.cross(g, a.value), b.shape),
        ),
    )


def scale_shift(x: ArrayLike, scale: ArrayLike, shift: ArrayLike) -> Var:
    """Learned per-channel affine x·scale + shift over the last axis."""
    x, scale, shift = as_var(x), as_var(scale), as_var(shift)
    channels = x.shape[-1]
    if scale.shape != (channels,):
        raise ShapeMismatchError("scale_shift", x.shape, scale.shape)
    if shift.shape != (channels,):
        raise ShapeMismatchError("scale_shift", x.shape, shift.shape)

    def backward(g: np.ndarray):
        flat_g = g.reshape(-1, channels)
        return (
            g * scale.value,
            (flat_g * x.value.reshape(-1, channels)).sum(axis=0),
            flat_g.sum(axis=0),
        )

    return _result(x.value * scale.value + shift.value, (x, scale, shift), backward)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits: ArrayLike, labels) -> Var:
    """Mean negative log-likelihood of integer labels under softmax(logits)."""
    logits = as_var(logits)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    value2d = logits.value.reshape(1, -1) if logits.ndim == 1 else logits.value
    if value2d.ndim != 2 or value2d.shape[0] != labels.shape[0]:
        raise ShapeMismatchError("softmax_cross_entropy", logits.shape, labels.shape)
    k = value2d.shape[1]
    if np.any(labels < 0) or np.any(labels >= k):
        raise InvalidInputError(f"labels must lie in [0, {k}), got {labels.tolist()}")

    rows = np.arange(labels.shape[0])
    logp = log_softmax(value2d)
    loss = -logp[rows, labels].mean()

    def backward(g: np.ndarray):
        probs = np.exp(logp)
        probs[rows, labels] -= 1.0
        return ((g * probs / labels.shape[0]).reshape(logits.shape),)

    return _result(np.asarray(loss), (logits,), backward)


def mse(pred: ArrayLike, target: ArrayLike) -> Var:
    """Mean squared element-wise error; shapes must match exactly."""
    pred, target = as_var(pred), as_var(target)
    if pred.shape != target.shape:
        raise ShapeMismatchError("mse", pred.shape, target.shape)
    diff = pred.value - target.value
    n = max(diff.size, 1)

    def backward(g: np.ndarray):
        gp = 2.0 * g * diff / n
        return gp, -gp

    return _result(np.asarray(np.mean(diff ** 2)), (pred, target), backward)
