"""Central finite-difference verification of every backward pass.

Each case builds leaf tensors and a scalar-valued function of them, runs
one reverse-mode sweep, then perturbs every coordinate by +-eps and
compares. Relative error uses max(|analytic|, |numeric|, 1e-3) as the
denominator so near-zero coordinates do not blow up the ratio.

Random inputs are drawn as shuffled evenly-spaced grids, which keeps every
pairwise gap far above eps: argmax ties in max-pooling and ReLU kinks can
never sit inside a perturbation interval.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .convlstm import convlstm_step, zero_state, ConvLstmState
from .ops import (
    conv2d,
    dense,
    log_softmax,
    mask_apply,
    maxpool2d,
    pick,
    relu,
    sigmoid,
    sum_all,
    tanh,
)
from .tensor import Tensor

REL_FLOOR = 1e-3


@dataclass
class GradCheckResult:
    name: str
    max_rel_error: float
    worst_tensor: str
    worst_index: int
    analytic: float
    numeric: float

    def __str__(self):
        return (
            f"{self.name}: max rel err {self.max_rel_error:.3e} "
            f"at {self.worst_tensor}[{self.worst_index}] "
            f"(analytic {self.analytic:.6e}, numeric {self.numeric:.6e})"
        )


@dataclass
class GradCheckCase:
    name: str
    threshold: float
    build: Callable  # rng -> (scalar_fn, {name: Tensor})


def grad_check(scalar_fn, tensors: dict, eps: float = 1e-5, name: str = "op") -> GradCheckResult:
    """Compare reverse-mode gradients of scalar_fn() against central differences."""
    for t in tensors.values():
        t.requires_grad = True
        t.grad = None
    out = scalar_fn()
    out.backward()
    analytic = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for k, t in tensors.items()}

    worst = GradCheckResult(name, -1.0, "", 0, 0.0, 0.0)
    for key, t in tensors.items():
        flat = t.data.reshape(-1)
        ana = analytic[key].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(scalar_fn().data)
            flat[i] = orig - eps
            f_minus = float(scalar_fn().data)
            flat[i] = orig
            num = (f_plus - f_minus) / (2.0 * eps)
            denom = max(abs(ana[i]), abs(num), REL_FLOOR)
            rel = abs(ana[i] - num) / denom
            if rel > worst.max_rel_error:
                worst.max_rel_error = rel
                worst.worst_tensor = key
                worst.worst_index = i
                worst.analytic = float(ana[i])
                worst.numeric = num
    return worst


def _spread(rng: np.random.Generator, shape, lo=-1.0, hi=1.0, gap_from=None) -> np.ndarray:
    """Shuffled evenly spaced values in [lo, hi]; gaps stay >> eps."""
    n = int(np.prod(shape))
    vals = np.linspace(lo, hi, n)
    if gap_from is not None:
        # keep a safety margin around gap_from (e.g. the ReLU kink at 0)
        vals = vals + np.where(vals >= gap_from, 0.05, -0.05)
    return rng.permutation(vals).reshape(shape)


def _projection_scalar(out: Tensor, proj: np.ndarray) -> Tensor:
    return sum_all(out * Tensor(proj))


def _case_conv2d(rng):
    x = Tensor(_spread(rng, (3, 5, 5)))
    w = Tensor(_spread(rng, (4, 3, 3, 3)))
    b = Tensor(_spread(rng, (4,)))
    proj = rng.standard_normal((4, 5, 5))
    return (lambda: _projection_scalar(conv2d(x, w, b, padding=1), proj)), {
        "x": x,
        "w": w,
        "b": b,
    }


def _case_maxpool2d(rng):
    x = Tensor(_spread(rng, (3, 6, 6)))
    proj = rng.standard_normal((3, 3, 3))
    return (lambda: _projection_scalar(maxpool2d(x), proj)), {"x": x}


def _case_dense(rng):
    x = Tensor(_spread(rng, (7,)))
    w = Tensor(_spread(rng, (4, 7)))
    b = Tensor(_spread(rng, (4,)))
    proj = rng.standard_normal((4,))
    return (lambda: _projection_scalar(dense(x, w, b), proj)), {"x": x, "w": w, "b": b}


def _case_elementwise(op):
    def build(rng):
        x = Tensor(_spread(rng, (50,), gap_from=0.0))
        proj = rng.standard_normal((50,))
        return (lambda: _projection_scalar(op(x), proj)), {"x": x}

    return build


def _case_mask_apply(rng):
    feats = Tensor(_spread(rng, (4, 3, 3)))
    mask = Tensor(_spread(rng, (1, 3, 3), lo=0.05, hi=0.95))
    proj = rng.standard_normal((4, 3, 3))
    return (lambda: _projection_scalar(mask_apply(feats, mask), proj)), {
        "features": feats,
        "mask": mask,
    }


def _case_softmax_logprob(rng):
    logits = Tensor(2.0 * _spread(rng, (5,)))
    action = int(rng.integers(0, 5))
    return (lambda: pick(log_softmax(logits), action)), {"logits": logits}


def _case_convlstm(rng):
    channels, k = 2, 3
    xs = [Tensor(_spread(rng, (2, 3, 3))) for _ in range(3)]
    w = Tensor(0.5 * _spread(rng, (4 * channels, 2 + channels, k, k)))
    b = Tensor(_spread(rng, (4 * channels,)))
    h0 = Tensor(0.5 * _spread(rng, (channels, 3, 3)))
    c0 = Tensor(0.5 * _spread(rng, (channels, 3, 3)))
    projs = [rng.standard_normal((channels, 3, 3)) for _ in range(3)]

    def scalar_fn():
        state = ConvLstmState(h0, c0)
        total = None
        for x, proj in zip(xs, projs):
            hidden, state = convlstm_step(x, state, w, b)
            term = _projection_scalar(hidden, proj)
            total = term if total is None else total + term
        return total

    tensors = {"w": w, "b": b, "h0": h0, "c0": c0}
    for i, x in enumerate(xs):
        tensors[f"x{i}"] = x
    return scalar_fn, tensors


def kernel_cases() -> list:
    """The finite-difference cases for every tensor kernel."""
    return [
        GradCheckCase("conv2d", 1e-4, _case_conv2d),
        GradCheckCase("maxpool2d", 1e-4, _case_maxpool2d),
        GradCheckCase("dense", 1e-6, _case_dense),
        GradCheckCase("relu", 1e-6, _case_elementwise(relu)),
        GradCheckCase("sigmoid", 1e-6, _case_elementwise(sigmoid)),
        GradCheckCase("tanh", 1e-6, _case_elementwise(tanh)),
        GradCheckCase("mask_apply", 1e-6, _case_mask_apply),
        GradCheckCase("softmax_logprob", 1e-6, _case_softmax_logprob),
        GradCheckCase("convlstm_step", 1e-4, _case_convlstm),
    ]


def run_gradcheck_suite(seeds=(0,), cases=None, eps: float = 1e-5) -> list:
    """Run every case over several seeds; returns the per-case worst results."""
    if cases is None:
        cases = kernel_cases()
    results = []
    for case in cases:
        worst = None
        case_tag = sum(case.name.encode())  # stable across processes
        for seed in seeds:
            rng = np.random.default_rng([case_tag, seed])
            scalar_fn, tensors = case.build(rng)
            res = grad_check(scalar_fn, tensors, eps=eps, name=case.name)
            if worst is None or res.max_rel_error > worst.max_rel_error:
                worst = res
        results.append((case, worst))
    return results
