"""
Central finite-difference checks of recorded gradients.
"""

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from ..errors import InvalidInputError
from .tensor import Tape, Var


@dataclass
class GradcheckResult:
    max_rel_error: float
    checked: int
    skipped: int

    def passed(self, rtol: float = 1e-4) -> bool:
        return self.checked > 0 and self.max_rel_error < rtol


def _evaluate(fn: Callable[[], Var]) -> float:
    out = fn()
    if out.value.size != 1:
        raise InvalidInputError(f"gradcheck needs a scalar function, got shape {out.shape}")
    return float(out.value.reshape(-1)[0])


def _central(fn: Callable[[], Var], x: Var, index, eps: float) -> float:
    original = x.value[index]
    try:
        x.value[index] = original + eps
        up = _evaluate(fn)
        x.value[index] = original - eps
        down = _evaluate(fn)
    finally:
        x.value[index] = original
    return (up - down) / (2.0 * eps)


def gradcheck(
    fn: Callable[[], Var],
    inputs: Sequence[Var],
    eps: float = 1e-5,
    atol: float = 1e-8,
    max_coords: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> GradcheckResult:
    """Compare tape gradients of a scalar ``fn()`` with central differences.

    Coordinates where halving eps changes the estimate sit on a kink (relu,
    max) and are skipped.
    """
    with Tape() as tape:
        root = fn()
    analytic = tape.gradients(root)

    worst = 0.0
    checked = skipped = 0
    for x in inputs:
        if not x.requires_grad:
            raise InvalidInputError(f"input {x!r} does not require a gradient")
        x.value = np.array(x.value, dtype=np.float64)
        g = analytic.get(x, np.zeros_like(x.value))
        g = np.broadcast_to(g, x.value.shape)

        coords: List[tuple] = list(np.ndindex(x.value.shape))
        if max_coords is not None and len(coords) > max_coords:
            pick = (rng or np.random.default_rng(0)).choice(len(coords), size=max_coords, replace=False)
            coords = [coords[i] for i in sorted(pick)]

        for index in coords:
            numeric = _central(fn, x, index, eps)
            half = _central(fn, x, index, eps / 2.0)
            if abs(numeric - half) > 1e-6 * max(1.0, abs(numeric)):
                skipped += 1
                continue
            a = float(g[index])
            diff = abs(a - numeric)
            checked += 1
            if diff <= atol:
                continue
            worst = max(worst, diff / max(abs(a), abs(numeric)))
    return GradcheckResult(max_rel_error=worst, checked=checked, skipped=skipped)
