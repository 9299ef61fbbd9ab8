"""A tiny reverse-mode autodiff tensor over float64 numpy arrays.

Each operation builds a node holding its parents and a closure that pushes the
upstream gradient to them; ``backward`` walks the graph in reverse topological
order. Only what the U-Net needs is implemented.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch


class Tensor:
    __slots__ = ("values", "grad", "requires_grad", "_parents", "_push_grad")

    def __init__(self, values, requires_grad=False, _parents=(), _push_grad=None):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._push_grad = _push_grad

    @property
    def shape(self):
        return self.values.shape

    @property
    def dims(self):
        return list(self.values.shape)

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += g

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every requires_grad leaf."""
        if grad is None:
            if self.values.size != 1:
                raise ShapeMismatch("backward() without an explicit gradient needs a scalar")
            grad = np.ones_like(self.values)

        topo, seen = [], set()

        def visit(node):
            if id(node) in seen:
                return
            seen.add(id(node))
            for p in node._parents:
                visit(p)
            topo.append(node)

        visit(self)
        self._accumulate(np.asarray(grad, dtype=np.float64))
        for node in reversed(topo):
            if node._push_grad is not None and node.grad is not None and node.requires_grad:
                node._push_grad(node.grad)

    # -- elementwise / structural ops used by the network -------------------

    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        if self.values.shape != other.values.shape:
            raise ShapeMismatch(f"add: {self.values.shape} vs {other.values.shape}")
        out_parents = (self, other)

        def push(g):
            if self.requires_grad:
                self._accumulate(g)
            if other.requires_grad:
                other._accumulate(g)

        return Tensor(self.values + other.values, _parents=out_parents, _push_grad=push)

    def __mul__(self, scalar):
        s = float(scalar)

        def push(g):
            if self.requires_grad:
                self._accumulate(g * s)

        return Tensor(self.values * s, _parents=(self,), _push_grad=push)

    __rmul__ = __mul__

    def sum(self):
        def push(g):
            if self.requires_grad:
                self._accumulate(np.broadcast_to(g, self.values.shape).copy())

        return Tensor(self.values.sum(), _parents=(self,), _push_grad=push)


def relu(x: Tensor) -> Tensor:
    mask = x.values > 0

    def push(g):
        if x.requires_grad:
            x._accumulate(g * mask)

    return Tensor(np.where(mask, x.values, 0.0), _parents=(x,), _push_grad=push)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate two NCHW tensors along the channel axis."""
    if a.values.shape[0] != b.values.shape[0] or a.values.shape[2:] != b.values.shape[2:]:
        raise ShapeMismatch(f"concat: {a.values.shape} vs {b.values.shape}")
    ca = a.values.shape[1]

    def push(g):
        if a.requires_grad:
            a._accumulate(g[:, :ca])
        if b.requires_grad:
            b._accumulate(g[:, ca:])

    return Tensor(np.concatenate([a.values, b.values], axis=1), _parents=(a, b), _push_grad=push)
