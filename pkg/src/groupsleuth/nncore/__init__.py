from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .layers import (
    DTYPE,
    GruCell,
    Linear,
    NonFiniteError,
    check_finite,
    glorot,
    gru_step,
    relu,
    sigmoid,
    softmax_rows,
)
from .losses import bce, bce_grad, cross_entropy
from .optim import Adam, Sgd, clip_global_norm, make_optimizer, train_step

__all__ = [
    "Adam",
    "Checkpoint",
    "CheckpointError",
    "DTYPE",
    "GruCell",
    "Linear",
    "NonFiniteError",
    "Sgd",
    "bce",
    "bce_grad",
    "check_finite",
    "clip_global_norm",
    "cross_entropy",
    "glorot",
    "gru_step",
    "load_checkpoint",
    "make_optimizer",
    "relu",
    "save_checkpoint",
    "sigmoid",
    "softmax_rows",
    "train_step",
]
