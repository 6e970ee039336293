"""Small dense-network toolkit: tensors with a recording tape, layers, Adam."""

from .autodiff import (
    Tape,
    Tensor,
    affine,
    backward,
    batch_norm,
    concat,
    dropout,
    leaky_relu,
    no_record,
    norm2_rows,
    reduce_mean,
    relu,
)
from .layers import BatchNorm, Linear, Mlp, MlpConfig
from .optim import AdamState, adam_step

__all__ = [
    "AdamState",
    "BatchNorm",
    "Linear",
    "Mlp",
    "MlpConfig",
    "Tape",
    "Tensor",
    "adam_step",
    "affine",
    "backward",
    "batch_norm",
    "concat",
    "dropout",
    "leaky_relu",
    "no_record",
    "norm2_rows",
    "reduce_mean",
    "relu",
]
