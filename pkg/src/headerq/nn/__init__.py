from ._kernels import BACKEND
from .layers import (
    ShapeError,
    bce_loss,
    conv1d_backward,
    conv1d_forward,
    dense,
    dense_backward,
    dropout,
    dropout_backward,
    embedding_backward,
    embedding_forward,
    gaussian_init,
    global_maxpool,
    global_maxpool_backward,
    maxpool1d,
    maxpool1d_backward,
    pool_out_len,
    relu,
    relu_backward,
    sigmoid,
)
from .optim import OptimizerState, sgd_momentum_step

__all__ = [
    "BACKEND",
    "ShapeError",
    "OptimizerState",
    "bce_loss",
    "conv1d_backward",
    "conv1d_forward",
    "dense",
    "dense_backward",
    "dropout",
    "dropout_backward",
    "embedding_backward",
    "embedding_forward",
    "gaussian_init",
    "global_maxpool",
    "global_maxpool_backward",
    "maxpool1d",
    "maxpool1d_backward",
    "pool_out_len",
    "relu",
    "relu_backward",
    "sgd_momentum_step",
    "sigmoid",
]
