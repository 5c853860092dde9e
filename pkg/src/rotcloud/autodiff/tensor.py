"""
Differentiable values and the tape that records operations on them.

Operations only record while a Tape is active (``with Tape() as tape:``) and
at least one input requires a gradient; otherwise they just compute values.
"""

from contextvars import ContextVar
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import InvalidInputError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_ACTIVE_TAPE: ContextVar[Optional["Tape"]] = ContextVar("rotcloud_active_tape", default=None)


def active_tape() -> Optional["Tape"]:
    return _ACTIVE_TAPE.get()


class Var:
    """A float64 array plus the bookkeeping reverse mode needs."""

    __slots__ = ("value", "grad", "name", "requires_grad", "node_id", "parents", "backward_fn", "tape")

    def __init__(self, value, requires_grad: bool = False, name: Optional[str] = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.requires_grad = requires_grad
        self.node_id: Optional[int] = None
        self.parents: Tuple["Var", ...] = ()
        self.backward_fn: Optional[BackwardFn] = None
        self.tape: Optional["Tape"] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def item(self) -> float:
        return float(self.value.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Var{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops

        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops

        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops

        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops

        return ops.div(self, other)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)

    def __neg__(self):
        from . import ops

        return ops.mul(self, -1.0)

    def __getitem__(self, index):
        from . import ops

        return ops.getitem(self, index)


class Parameter(Var):
    """A named trainable leaf whose gradient always has the value's shape."""

    __slots__ = ()

    def __init__(self, value, name: str):
        super().__init__(value, requires_grad=True, name=name)
        self.zero_grad()


class Tape:
    """Ordered record of operations; parents always precede their children."""

    def __init__(self):
        self.nodes: List[Var] = []
        self._tokens = []

    def __enter__(self) -> "Tape":
        self._tokens.append(_ACTIVE_TAPE.set(self))
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _ACTIVE_TAPE.reset(self._tokens.pop())

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, out: Var, parents: Sequence[Var], backward_fn: BackwardFn) -> Var:
        out.requires_grad = True
        out.parents = tuple(parents)
        out.backward_fn = backward_fn
        out.node_id = len(self.nodes)
        out.tape = self
        self.nodes.append(out)
        return out

    def gradients(self, root: Var) -> Dict[Var, np.ndarray]:
        """∂root/∂leaf for every leaf that requires a gradient, without touching leaf.grad."""
        if root.value.size != 1:
            raise InvalidInputError(f"backward needs a scalar root, got shape {root.shape}")
        if root.node_id is None:
            return {root: np.ones_like(root.value)} if root.requires_grad else {}
        if root.tape is not self:
            raise InvalidInputError("root was recorded on a different tape")

        grads: Dict[int, np.ndarray] = {id(root): np.ones_like(root.value)}
        leaves: Dict[int, Var] = {}
        for node in reversed(self.nodes[: root.node_id + 1]):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg
                if parent.node_id is None:
                    leaves[key] = parent
        return {leaves[key]: grads[key] for key in leaves}

    def backward(self, root: Var) -> None:
        """Accumulate ∂root/∂leaf into leaf.grad."""
        for leaf, g in self.gradients(root).items():
            leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
        root.grad = np.ones_like(root.value)


def backward(root: Var) -> None:
    if root.value.size != 1:
        raise InvalidInputError(f"backward needs a scalar root, got shape {root.shape}")
    if root.tape is None:
        if root.requires_grad:
            root.grad = np.ones_like(root.value)
            return
        raise InvalidInputError("root was not recorded on a tape")
    root.tape.backward(root)
