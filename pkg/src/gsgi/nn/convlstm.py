"""ConvLSTM cell: convolutional input-to-state and state-to-state maps,
sigmoid input/forget/output gates, tanh candidate, no peepholes.

The two transforms are fused as one convolution over the channel-wise
concatenation of (input, hidden); the weight holds the four gate blocks
stacked along the output-channel axis in (i, f, g, o) order. The gate
nonlinearities and state update are a single tape node with a hand-derived
backward, which keeps the per-step graph small.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import KernelError
from .ops import concat_channels, conv2d, slice_channels
from .tensor import Tensor


@dataclass
class ConvLstmState:
    hidden: Tensor  # (C, H, W)
    cell: Tensor  # (C, H, W)

    def detach(self) -> "ConvLstmState":
        return ConvLstmState(self.hidden.detach(), self.cell.detach())


def zero_state(channels: int, height: int, width: int) -> ConvLstmState:
    return ConvLstmState(
        Tensor(np.zeros((channels, height, width))),
        Tensor(np.zeros((channels, height, width))),
    )


def _lstm_gates(z: Tensor, c_prev: Tensor) -> Tensor:
    """Gate update producing hidden and cell stacked as (2C, H, W).

    i = sig(z_i), f = sig(z_f), g = tanh(z_g), o = sig(z_o)
    c = f * c_prev + i * g ;  h = o * tanh(c)
    """
    channels = c_prev.data.shape[0]
    zd = z.data
    with np.errstate(over="ignore"):
        gate_i = 1.0 / (1.0 + np.exp(-zd[:channels]))
        gate_f = 1.0 / (1.0 + np.exp(-zd[channels : 2 * channels]))
        gate_o = 1.0 / (1.0 + np.exp(-zd[3 * channels :]))
    cand = np.tanh(zd[2 * channels : 3 * channels])
    cell = gate_f * c_prev.data + gate_i * cand
    tanh_cell = np.tanh(cell)
    out = np.concatenate([gate_o * tanh_cell, cell], axis=0)

    def backward_fn(g):
        dh = g[:channels]
        dc_out = g[channels:]
        d_o = dh * tanh_cell
        dc = dc_out + dh * gate_o * (1.0 - tanh_cell * tanh_cell)
        dz = np.empty_like(zd)
        dz[:channels] = dc * cand * gate_i * (1.0 - gate_i)  # d z_i
        dz[channels : 2 * channels] = dc * c_prev.data * gate_f * (1.0 - gate_f)
        dz[2 * channels : 3 * channels] = dc * gate_i * (1.0 - cand * cand)
        dz[3 * channels :] = d_o * gate_o * (1.0 - gate_o)
        z.accumulate_grad_owned(dz)
        c_prev.accumulate_grad_owned(dc * gate_f)

    return Tensor.from_op(out, (z, c_prev), backward_fn)


def convlstm_step(
    x: Tensor, state: ConvLstmState, weight: Tensor, bias: Tensor
) -> tuple:
    """One recurrence step; returns (hidden, next_state) with hidden == next_state.hidden."""
    if weight.data.ndim != 4 or weight.data.shape[0] % 4 != 0:
        raise KernelError("convlstm weight must be (4C, C_in + C, k, k)")
    channels = weight.data.shape[0] // 4
    k = weight.data.shape[2]
    if k % 2 != 1:
        raise KernelError("convlstm kernel size must be odd (same padding)")
    if state.hidden.data.shape != (channels,) + x.data.shape[1:]:
        raise KernelError(
            f"hidden shape {state.hidden.data.shape} incompatible with input {x.data.shape}"
        )
    if state.hidden.data.shape != state.cell.data.shape:
        raise KernelError("hidden and cell state shapes must match")

    z = conv2d(concat_channels(x, state.hidden), weight, bias, padding=k // 2)
    stacked = _lstm_gates(z, state.cell)
    hidden = slice_channels(stacked, 0, channels)
    cell = slice_channels(stacked, channels, 2 * channels)
    return hidden, ConvLstmState(hidden, cell)
