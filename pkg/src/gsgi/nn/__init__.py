"""Scratch tensor kernels with reverse-mode differentiation.

Just the operations the mask-attention actor-critic needs: convolution,
max-pooling, dense layers, activations, spatial masking, softmax heads and
a ConvLSTM cell, all in double precision, each backward pass verified
against central finite differences.
"""

from .tensor import Parameter, Tensor
from .ops import (
    concat_channels,
    conv2d,
    dense,
    exp,
    flatten,
    log,
    log_softmax,
    mask_apply,
    maxpool2d,
    pick,
    relu,
    sigmoid,
    slice_channels,
    softmax,
    sum_all,
    tanh,
)
from .convlstm import ConvLstmState, convlstm_step
from .gradcheck import GradCheckCase, GradCheckResult, grad_check, run_gradcheck_suite

__all__ = [
    "Parameter",
    "Tensor",
    "concat_channels",
    "conv2d",
    "dense",
    "exp",
    "flatten",
    "log",
    "log_softmax",
    "mask_apply",
    "maxpool2d",
    "pick",
    "relu",
    "sigmoid",
    "slice_channels",
    "softmax",
    "sum_all",
    "tanh",
    "ConvLstmState",
    "convlstm_step",
    "GradCheckCase",
    "GradCheckResult",
    "grad_check",
    "run_gradcheck_suite",
]
