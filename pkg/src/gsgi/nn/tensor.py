"""Dynamic-graph tensors.

A Tensor wraps a float64 ndarray and remembers how it was computed; calling
`backward()` on a scalar result walks the graph in reverse topological
order and accumulates gradients with += into every reachable node that
requires them. Parameters are leaf tensors whose gradient buffer persists
across backward calls until `zero_grad()`.
"""

from __future__ import annotations

import numpy as np

from ..errors import KernelError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_deferred_outer")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward_fn = None
        self._deferred_outer = None

    @staticmethod
    def from_op(data, parents, backward_fn) -> "Tensor":
        t = Tensor(data)
        t.requires_grad = any(p.requires_grad for p in parents)
        if t.requires_grad:
            t._parents = tuple(parents)
            t._backward_fn = backward_fn
        return t

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def accumulate_grad(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g)  # own copy; incoming buffers may be shared
        else:
            self.grad += g

    def accumulate_grad_owned(self, g):
        """Like accumulate_grad, but the caller guarantees `g` is a freshly
        allocated array nothing else references, so it can be adopted."""
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = g
        else:
            self.grad += g

    def push_outer_grad(self, g2, cols):
        """Defer a `g2 @ cols.T` gradient contribution; backward() batches all
        deferred pieces for a node into one GEMM (big win for weights reused
        across a backpropagation-through-time window)."""
        if not self.requires_grad:
            return
        if self._deferred_outer is None:
            self._deferred_outer = []
        self._deferred_outer.append((g2, cols))

    def _flush_deferred(self):
        pending = self._deferred_outer
        if not pending:
            return
        self._deferred_outer = None
        if len(pending) == 1:
            contrib = pending[0][0] @ pending[0][1].T
        else:
            g_all = np.concatenate([g for g, _ in pending], axis=1)
            c_all = np.concatenate([c for _, c in pending], axis=1)
            contrib = g_all @ c_all.T
        self.accumulate_grad_owned(contrib.reshape(self.data.shape))

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def backward(self, seed=None):
        """Reverse-mode sweep from this node."""
        if seed is None:
            if self.data.size != 1:
                raise KernelError("backward() without a seed needs a scalar")
            seed = np.ones_like(self.data)
        if not self.requires_grad:
            return
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self.accumulate_grad(seed)
        for node in reversed(topo):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)
        for node in topo:
            node._flush_deferred()
        # transient grads on interior nodes are dropped; Parameter.grad stays
        for node in topo:
            if node._backward_fn is not None:
                node.grad = None

    # elementwise arithmetic on matching shapes, plus python scalars

    def _check_shape(self, other):
        if other.data.shape != self.data.shape:
            raise KernelError(f"shape mismatch {self.data.shape} vs {other.data.shape}")

    def __add__(self, other):
        if isinstance(other, Tensor):
            self._check_shape(other)

            def backward_fn(g, a=self, b=other):
                a.accumulate_grad(g)
                b.accumulate_grad(g)

            return Tensor.from_op(self.data + other.data, (self, other), backward_fn)
        val = float(other)

        def backward_scalar(g, a=self):
            a.accumulate_grad(g)

        return Tensor.from_op(self.data + val, (self,), backward_scalar)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            self._check_shape(other)

            def backward_fn(g, a=self, b=other):
                a.accumulate_grad(g)
                b.accumulate_grad_owned(-g)

            return Tensor.from_op(self.data - other.data, (self, other), backward_fn)
        val = float(other)

        def backward_scalar(g, a=self):
            a.accumulate_grad(g)

        return Tensor.from_op(self.data - val, (self,), backward_scalar)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Tensor):
            self._check_shape(other)

            def backward_fn(g, a=self, b=other):
                a.accumulate_grad_owned(g * b.data)
                b.accumulate_grad_owned(g * a.data)

            return Tensor.from_op(self.data * other.data, (self, other), backward_fn)
        val = float(other)

        def backward_scalar(g, a=self):
            a.accumulate_grad_owned(g * val)

        return Tensor.from_op(self.data * val, (self,), backward_scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


class Parameter(Tensor):
    """Trainable leaf with a persistent, pre-allocated gradient buffer."""

    def __init__(self, data):
        super().__init__(data, requires_grad=True)
        self.grad = np.zeros_like(self.data)

    def accumulate_grad(self, g):
        self.grad += g

    accumulate_grad_owned = accumulate_grad
