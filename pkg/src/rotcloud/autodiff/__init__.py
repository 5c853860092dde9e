"""
Reverse-mode differentiation over float64 numpy arrays.
"""

from . import ops
from .gradcheck import GradcheckResult, gradcheck
from .optim import SGD, Adam, AdamState, Optimizer, adam_step, make_optimizer, sgd_step
from .serialize import decode_weights, encode_weights, load_weights, save_weights
from .tensor import Parameter, Tape, Var, active_tape, backward

__all__ = [
    "Adam",
    "AdamState",
    "GradcheckResult",
    "Optimizer",
    "Parameter",
    "SGD",
    "Tape",
    "Var",
    "active_tape",
    "adam_step",
    "backward",
    "decode_weights",
    "encode_weights",
    "gradcheck",
    "load_weights",
    "make_optimizer",
    "ops",
    "save_weights",
    "sgd_step",
]
