from .ops import (
    add,
    affine,
    bce_loss,
    cast,
    conv2d_3x3,
    film,
    gcn_layer,
    global_mean_pool,
    mul,
    normalized_adjacency,
    relu,
    reshape,
    sigmoid,
    take_cols,
    take_rows,
    total,
)
from .optim import AdamState, adam_step, cosine_lr
from .tensor import Tensor

__all__ = [
    "AdamState",
    "Tensor",
    "adam_step",
    "add",
    "affine",
    "bce_loss",
    "cast",
    "conv2d_3x3",
    "cosine_lr",
    "film",
    "gcn_layer",
    "global_mean_pool",
    "mul",
    "normalized_adjacency",
    "relu",
    "reshape",
    "sigmoid",
    "take_cols",
    "take_rows",
    "total",
]
