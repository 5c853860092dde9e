"""
Mini-batch gradient training shared by the pretext and keypoint stages.

Each sample is differentiated on its own tape and per-sample gradients are
summed in sample order, so results do not depend on the worker count.
"""

import time
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from .autodiff import Tape, Var, make_optimizer
from .config import FitConfig
from .encoder import EncoderModel
from .errors import DegenerateRotationError, NonFiniteError
from .schemas import TrainingLog
from .utils import make_rng, parallel_map

# rng streams keep the seeded draws of each purpose independent
HOLDOUT_STREAM = 1
TRAIN_STREAM = 2
EVAL_STREAM = 3

MAX_DEGENERATE_FRACTION = 0.01

SampleFn = Callable[[int, np.random.Generator], Tuple[np.ndarray, Any]]
LossFn = Callable[[Var, Any], Optional[Var]]
EvalFn = Callable[[EncoderModel], float]


def holdout_split(n: int, fraction: float, seed: int) -> Tuple[List[int], List[int]]:
    """Seeded (train, holdout) index split; holdout is empty when the fraction rounds to 0."""
    n_hold = int(round(fraction * n))
    n_hold = min(n_hold, n - 1) if n > 1 else 0
    order = make_rng(seed, HOLDOUT_STREAM).permutation(n)
    return sorted(order[n_hold:].tolist()), sorted(order[:n_hold].tolist())


def _sample_step(
    model: EncoderModel, sample: Tuple[np.ndarray, Any], loss_fn: LossFn
) -> Optional[Tuple[float, Dict[str, np.ndarray]]]:
    points, target = sample
    with Tape() as tape:
        _, out = model.forward_batch(points[None])
        loss = loss_fn(out, target)
        if loss is None:
            return None
        grads = tape.gradients(loss)
    return loss.item(), {p.name: g for p, g in grads.items()}


def fit(
    model: EncoderModel,
    indices: Sequence[int],
    sample_fn: SampleFn,
    loss_fn: LossFn,
    evaluate: EvalFn,
    config: FitConfig,
    metric_name: str,
) -> TrainingLog:
    """Train ``model`` in place over the dataset ``indices``.

    ``sample_fn(index, rng)`` builds one (points, target) pair; ``loss_fn``
    returns the per-sample loss or None for a sample to skip.
    """
    optimizer = make_optimizer(config.optimizer, model.parameters(), config.learning_rate)
    log = TrainingLog(metric_name=metric_name)
    indices = np.asarray(indices, dtype=np.int64)
    seen = 0

    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        order = indices[make_rng(config.seed, TRAIN_STREAM, epoch).permutation(len(indices))]
        epoch_loss = 0.0
        epoch_used = 0

        for batch_no, start in enumerate(range(0, len(order), config.batch_size)):
            batch = order[start : start + config.batch_size].tolist()

            def step(index: int, epoch=epoch):
                return _sample_step(model, sample_fn(index, make_rng(config.seed, TRAIN_STREAM, epoch, index)), loss_fn)

            results = parallel_map(step, batch, config.threads)
            used = [r for r in results if r is not None]
            seen += len(results)
            if len(used) < len(results):
                log.skipped_samples += len(results) - len(used)
                logger.warning(f"Skipped {log.skipped_samples} degenerate samples so far")
            if not used:
                continue

            batch_loss = sum(r[0] for r in used) / len(used)
            if not np.isfinite(batch_loss):
                raise NonFiniteError(f"non-finite loss at epoch {epoch}, batch {batch_no}")

            grads: Dict[str, np.ndarray] = {}
            for _, sample_grads in used:
                for name, g in sample_grads.items():
                    grads[name] = grads[name] + g if name in grads else np.array(g, dtype=np.float64)
            grads = {name: g / len(used) for name, g in grads.items()}
            try:
                optimizer.step(grads)
            except NonFiniteError as e:
                raise NonFiniteError(f"{e} at epoch {epoch}, batch {batch_no}") from e

            epoch_loss += batch_loss * len(used)
            epoch_used += len(used)
            logger.debug(f"epoch {epoch} batch {batch_no}: loss={batch_loss:.6f}")

        if log.skipped_samples > MAX_DEGENERATE_FRACTION * seen:
            raise DegenerateRotationError(f"{log.skipped_samples} of {seen} samples degenerate by epoch {epoch}")

        mean_loss = epoch_loss / epoch_used if epoch_used else float("nan")
        metric = evaluate(model)
        log.append(epoch, mean_loss, metric)
        logger.info(
            f"epoch {epoch}/{config.epochs}: loss={mean_loss:.6f} {metric_name}={metric:.6f} "
            f"({time.perf_counter() - started:.1f}s)"
        )
    return log
