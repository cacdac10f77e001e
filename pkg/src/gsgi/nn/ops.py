"""Forward/backward kernels. All convolutions are cross-correlations with
stride 1; padding is zero-fill. Gather/scatter index tables are cached per
shape so repeated rollout steps pay no setup cost."""

from __future__ import annotations

import numpy as np

from ..errors import KernelError
from .tensor import Tensor

_conv_tables = {}


def _conv_table(c_in, h, w, k, pad):
    key = (c_in, h, w, k, pad)
    tab = _conv_tables.get(key)
    if tab is None:
        h_out = h + 2 * pad - k + 1
        w_out = w + 2 * pad - k + 1
        if h_out < 1 or w_out < 1:
            raise KernelError(f"kernel {k} too large for input {h}x{w} with pad {pad}")
        hp, wp = h + 2 * pad, w + 2 * pad
        ki = np.repeat(np.arange(k), k)
        kj = np.tile(np.arange(k), k)
        oi = np.repeat(np.arange(h_out), w_out)
        oj = np.tile(np.arange(w_out), h_out)
        spatial = (ki[:, None] + oi[None, :]) * wp + (kj[:, None] + oj[None, :])
        flat3 = np.arange(c_in)[:, None, None] * (hp * wp) + spatial[None, :, :]
        flat = flat3.ravel()
        # same indices in (L, C*k*k) order, for the transposed backward GEMM
        flat_t = np.ascontiguousarray(flat3.reshape(c_in * k * k, -1).T).ravel()
        tab = (h_out, w_out, hp, wp, flat, flat_t)
        _conv_tables[key] = tab
    return tab


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, padding: int = 0) -> Tensor:
    """Cross-correlation: x (C,H,W), weight (O,C,k,k), bias (O,) -> (O,H',W')."""
    if x.data.ndim != 3 or weight.data.ndim != 4:
        raise KernelError("conv2d expects x (C,H,W) and weight (O,C,k,k)")
    c_in, h, w = x.data.shape
    c_out, c_w, k, k2 = weight.data.shape
    if c_w != c_in or k != k2:
        raise KernelError(
            f"conv2d weight {weight.data.shape} incompatible with input {x.data.shape}"
        )
    if bias.data.shape != (c_out,):
        raise KernelError(f"conv2d bias shape {bias.data.shape} != ({c_out},)")
    h_out, w_out, hp, wp, flat, flat_t = _conv_table(c_in, h, w, k, padding)

    if padding:
        xp = np.zeros((c_in, hp, wp))
        xp[:, padding : padding + h, padding : padding + w] = x.data
    else:
        xp = x.data
    cols = xp.reshape(-1).take(flat).reshape(c_in * k * k, h_out * w_out)
    w2 = weight.data.reshape(c_out, c_in * k * k)
    out = (w2 @ cols + bias.data[:, None]).reshape(c_out, h_out, w_out)

    def backward_fn(g):
        g2 = g.reshape(c_out, h_out * w_out)
        bias.accumulate_grad(g2.sum(axis=1))
        weight.push_outer_grad(g2, cols)
        if x.requires_grad:
            dcols_t = g2.T @ w2  # (L, C*k*k); this orientation hits the fast GEMM path
            dxp = np.bincount(flat_t, weights=dcols_t.ravel(), minlength=c_in * hp * wp)
            dxp = dxp.reshape(c_in, hp, wp)
            if padding:
                dxp = dxp[:, padding : padding + h, padding : padding + w]
            x.accumulate_grad_owned(dxp)

    return Tensor.from_op(out, (x, weight, bias), backward_fn)


def maxpool2d(x: Tensor) -> Tensor:
    """Non-overlapping 2x2 max; odd trailing rows/columns are dropped.
    Gradient routes to the first maximal entry of each window in raster order."""
    if x.data.ndim != 3:
        raise KernelError("maxpool2d expects (C,H,W)")
    c, h, w = x.data.shape
    if h < 2 or w < 2:
        raise KernelError("maxpool2d needs spatial dims >= 2")
    h2, w2 = h // 2, w // 2
    win = (
        x.data[:, : h2 * 2, : w2 * 2]
        .reshape(c, h2, 2, w2, 2)
        .transpose(0, 1, 3, 2, 4)
        .reshape(c, h2, w2, 4)
    )
    arg = win.argmax(axis=3)
    out = np.take_along_axis(win, arg[..., None], axis=3)[..., 0]

    def backward_fn(g):
        if not x.requires_grad:
            return
        dx = np.zeros_like(x.data)
        ci = np.arange(c)[:, None, None]
        ri = (np.arange(h2) * 2)[None, :, None] + arg // 2
        wi = (np.arange(w2) * 2)[None, None, :] + arg % 2
        dx[ci, ri, wi] = g  # windows are disjoint, plain assignment is safe
        x.accumulate_grad_owned(dx)

    return Tensor.from_op(out, (x,), backward_fn)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0.0)

    def backward_fn(g):
        x.accumulate_grad_owned(g * (x.data > 0.0))

    return Tensor.from_op(out, (x,), backward_fn)


def sigmoid(x: Tensor) -> Tensor:
    # exp may overflow to inf for very negative inputs; 1/(1+inf) -> 0 exactly
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(-x.data))

    def backward_fn(g):
        x.accumulate_grad_owned(g * out * (1.0 - out))

    return Tensor.from_op(out, (x,), backward_fn)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def backward_fn(g):
        x.accumulate_grad_owned(g * (1.0 - out * out))

    return Tensor.from_op(out, (x,), backward_fn)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)

    def backward_fn(g):
        x.accumulate_grad_owned(g * out)

    return Tensor.from_op(out, (x,), backward_fn)


def log(x: Tensor) -> Tensor:
    out = np.log(x.data)

    def backward_fn(g):
        x.accumulate_grad_owned(g / x.data)

    return Tensor.from_op(out, (x,), backward_fn)


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map: x (n,), weight (m,n), bias (m,) -> (m,)."""
    if x.data.ndim != 1 or weight.data.ndim != 2:
        raise KernelError("dense expects x (n,) and weight (m,n)")
    m, n = weight.data.shape
    if x.data.shape != (n,) or bias.data.shape != (m,):
        raise KernelError(
            f"dense shapes x{x.data.shape} w{weight.data.shape} b{bias.data.shape}"
        )
    out = weight.data @ x.data + bias.data

    def backward_fn(g):
        bias.accumulate_grad(g)
        weight.push_outer_grad(g[:, None], x.data[:, None])
        if x.requires_grad:
            x.accumulate_grad_owned(weight.data.T @ g)

    return Tensor.from_op(out, (x, weight, bias), backward_fn)


def mask_apply(features: Tensor, mask: Tensor) -> Tensor:
    """Broadcast a (1,H,W) mask multiplicatively over (C,H,W) features."""
    if features.data.ndim != 3 or mask.data.ndim != 3 or mask.data.shape[0] != 1:
        raise KernelError("mask_apply expects features (C,H,W) and mask (1,H,W)")
    if features.data.shape[1:] != mask.data.shape[1:]:
        raise KernelError(
            f"mask spatial dims {mask.data.shape[1:]} != features {features.data.shape[1:]}"
        )
    out = features.data * mask.data

    def backward_fn(g):
        features.accumulate_grad_owned(g * mask.data)
        mask.accumulate_grad_owned((g * features.data).sum(axis=0, keepdims=True))

    return Tensor.from_op(out, (features, mask), backward_fn)


def flatten(x: Tensor) -> Tensor:
    shape = x.data.shape
    out = x.data.reshape(-1)

    def backward_fn(g):
        x.accumulate_grad(g.reshape(shape))

    return Tensor.from_op(out, (x,), backward_fn)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[1:] != b.data.shape[1:]:
        raise KernelError("concat_channels needs matching spatial dims")
    ca = a.data.shape[0]
    out = np.concatenate([a.data, b.data], axis=0)

    def backward_fn(g):
        a.accumulate_grad(g[:ca])
        b.accumulate_grad(g[ca:])

    return Tensor.from_op(out, (a, b), backward_fn)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    out = x.data[start:stop]

    def backward_fn(g):
        if not x.requires_grad:
            return
        dx = np.zeros_like(x.data)
        dx[start:stop] = g
        x.accumulate_grad_owned(dx)

    return Tensor.from_op(out, (x,), backward_fn)


def sum_all(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum())

    def backward_fn(g):
        x.accumulate_grad_owned(np.full_like(x.data, float(g)))

    return Tensor.from_op(out, (x,), backward_fn)


def pick(x: Tensor, index: int) -> Tensor:
    """Select one entry of a 1-D tensor as a scalar."""
    if x.data.ndim != 1:
        raise KernelError("pick expects a 1-D tensor")
    out = np.asarray(x.data[index])

    def backward_fn(g):
        dx = np.zeros_like(x.data)
        dx[index] = g
        x.accumulate_grad_owned(dx)

    return Tensor.from_op(out, (x,), backward_fn)


def softmax(x: Tensor) -> Tensor:
    """Max-shifted softmax over a 1-D tensor."""
    if x.data.ndim != 1:
        raise KernelError("softmax expects a 1-D tensor")
    z = x.data - x.data.max()
    e = np.exp(z)
    p = e / e.sum()

    def backward_fn(g):
        x.accumulate_grad_owned(p * (g - np.dot(g, p)))

    return Tensor.from_op(p, (x,), backward_fn)


def log_softmax(x: Tensor) -> Tensor:
    if x.data.ndim != 1:
        raise KernelError("log_softmax expects a 1-D tensor")
    z = x.data - x.data.max()
    lp = z - np.log(np.exp(z).sum())

    def backward_fn(g):
        x.accumulate_grad_owned(g - np.exp(lp) * g.sum())

    return Tensor.from_op(lp, (x,), backward_fn)
