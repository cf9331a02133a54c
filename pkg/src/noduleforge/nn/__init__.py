"""Minimal tensor engine: exactly the layer set the nodule GAN needs."""

from .adam import Adam, AdamState, adam_state_for, adam_step
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import gradcheck, run_default_suite
from .layers import (LayerParams, batchnorm_params, conv2d_params,
                     conv2d_transpose_params, fully_connected_params)
from .ops import (activation_forward, add, batchnorm_forward, clamp,
                  conv2d_forward, conv2d_transpose_forward,
                  fully_connected_forward, leaky_relu, log, mean, mul, neg,
                  relu, reshape, rsub_scalar, sigmoid, sum_all, tanh)
from .tensor import DEFAULT_DTYPE, Tape, Tensor, backward, zeros

__all__ = [
    "Adam", "AdamState", "adam_state_for", "adam_step",
    "CheckpointError", "load_checkpoint", "save_checkpoint",
    "gradcheck", "run_default_suite",
    "LayerParams", "batchnorm_params", "conv2d_params",
    "conv2d_transpose_params", "fully_connected_params",
    "activation_forward", "add", "batchnorm_forward", "clamp",
    "conv2d_forward", "conv2d_transpose_forward", "fully_connected_forward",
    "leaky_relu", "log", "mean", "mul", "neg", "relu", "reshape",
    "rsub_scalar", "sigmoid", "sum_all", "tanh",
    "DEFAULT_DTYPE", "Tape", "Tensor", "backward", "zeros",
]
