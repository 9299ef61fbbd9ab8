"""Differentiable network operations: convolution, up-convolution, residual
block, and the masked cosine loss."""

from __future__ import annotations

import numpy as np

from ..errors import EmptyMask, ShapeMismatch
from . import kernels
from .tensor import Tensor, concat_channels, relu


def conv2d(x: Tensor, w: Tensor, b: Tensor = None, stride=1, pad=0) -> Tensor:
    """Cross-correlation of an NCHW input with FCkk weights plus a bias."""
    if x.values.ndim != 4 or w.values.ndim != 4:
        raise ShapeMismatch("conv2d expects 4-D input and weights")
    if x.values.shape[1] != w.values.shape[1]:
        raise ShapeMismatch(
            f"conv2d channel mismatch: input {x.values.shape[1]}, weights {w.values.shape[1]}")
    y = kernels.conv2d_forward(x.values, w.values, stride, pad)
    if b is not None:
        if b.values.shape != (w.values.shape[0],):
            raise ShapeMismatch("bias must have one entry per output channel")
        y = y + b.values[None, :, None, None]

    parents = (x, w) if b is None else (x, w, b)

    def push(g):
        if x.requires_grad:
            x._accumulate(kernels.conv2d_grad_input(g, w.values, x.values.shape, stride, pad))
        if w.requires_grad:
            w._accumulate(kernels.conv2d_grad_weights(g, x.values, w.values.shape, stride, pad))
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2, 3)))

    return Tensor(y, _parents=parents, _push_grad=push)


def upconv2x(x: Tensor, w: Tensor) -> Tensor:
    """Transposed convolution, kernel 2 stride 2: doubles H and W.

    Weights are C_in x C_out x 2 x 2 (the adjoint of a stride-2 conv from the
    output back to the input).
    """
    if w.values.ndim != 4 or w.values.shape[2:] != (2, 2):
        raise ShapeMismatch("upconv2x expects C_in x C_out x 2 x 2 weights")
    if x.values.shape[1] != w.values.shape[0]:
        raise ShapeMismatch(
            f"upconv2x channel mismatch: input {x.values.shape[1]}, weights {w.values.shape[0]}")
    n, c_in, h, width = x.values.shape
    c_out = w.values.shape[1]
    out_shape = (n, c_out, 2 * h, 2 * width)
    y = kernels.conv2d_grad_input(x.values, w.values, out_shape, stride=2, pad=0)

    def push(g):
        if x.requires_grad:
            x._accumulate(kernels.conv2d_forward(g, w.values, stride=2, pad=0))
        if w.requires_grad:
            w._accumulate(kernels.conv2d_grad_weights(x.values, g, w.values.shape, stride=2, pad=0))

    return Tensor(y, _parents=(x, w), _push_grad=push)


def residual_block(x: Tensor, params, prefix, stride=1, project=False) -> Tensor:
    """H(x) = activation(skip(x) + F(x)) with F = conv-relu-conv (3x3, same).

    ``params`` maps names to weight Tensors; the block uses
    ``{prefix}.conv1.w/.b``, ``{prefix}.conv2.w/.b`` and, when the block
    changes width or resolution, ``{prefix}.proj.w``.
    """
    h = conv2d(x, params[f"{prefix}.conv1.w"], params[f"{prefix}.conv1.b"], stride=stride, pad=1)
    h = relu(h)
    h = conv2d(h, params[f"{prefix}.conv2.w"], params[f"{prefix}.conv2.b"], stride=1, pad=1)
    if project:
        skip = conv2d(x, params[f"{prefix}.proj.w"], stride=stride, pad=0)
    else:
        skip = x
    return relu(skip + h)


def cosine_loss(pred: Tensor, target, mask, eps=1e-8) -> Tensor:
    """Mean over masked pixels of 1 - <p, n> / max(||p||, eps).

    ``target`` is an N x 3 x H x W array of unit normals, ``mask`` an
    N x H x W boolean array. Scale-invariant in the prediction.
    """
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    p = pred.values
    if p.shape != target.shape or p.shape[0] != mask.shape[0] or p.shape[2:] != mask.shape[1:]:
        raise ShapeMismatch("cosine_loss shapes disagree")
    n_px = int(np.count_nonzero(mask))
    if n_px == 0:
        raise EmptyMask("cosine_loss needs at least one masked pixel")

    norm = np.sqrt((p**2).sum(axis=1))            # N,H,W
    safe = np.maximum(norm, eps)
    dot = (p * target).sum(axis=1)                # N,H,W
    per_px = 1.0 - dot / safe
    loss = per_px[mask].sum() / n_px

    def push(g):
        if not pred.requires_grad:
            return
        # d/dp [ -<p,n>/r ] = -(n/r - <p,n> p / r^3)   (r = ||p||, flat below eps)
        scale = np.where(mask, g / n_px, 0.0)[:, None]  # N,1,H,W
        r = safe[:, None]
        grad = -(target / r)
        on_sphere = (norm > eps)[:, None]
        grad = grad + np.where(on_sphere, dot[:, None] * p / r**3, 0.0)
        pred._accumulate(scale * grad)

    return Tensor(np.float64(loss), _parents=(pred,), _push_grad=push)
